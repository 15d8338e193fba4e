"""
한줌 실행 기록 모델 (SQLAlchemy)
"""
from datetime import datetime

from sqlalchemy import Column, DateTime, Float, ForeignKey, Integer, String, Text
from sqlalchemy.orm import declarative_base, relationship

Base = declarative_base()


class ExperimentRun(Base):
    """harness 실행 1회"""
    __tablename__ = 'experiment_runs'

    id = Column(Integer, primary_key=True, autoincrement=True)
    experiment = Column(String(30), nullable=False)  # entropy-study / plan-bench / receding-run
    config_hash = Column(String(64), nullable=False)  # sha256 (정규화 JSON)
    config_path = Column(String(500))
    seed_offset = Column(Integer, default=0)
    output_dir = Column(String(500), nullable=False)
    status = Column(String(20), default='ok')  # ok / partial / failed
    row_count = Column(Integer, default=0)
    wall_time = Column(Float)  # 초
    message = Column(Text)
    created_at = Column(DateTime, default=datetime.now)

    # 관계
    artifacts = relationship("RunArtifact", back_populates="run", cascade="all, delete-orphan")


class RunArtifact(Base):
    """실행이 만든 출력 파일"""
    __tablename__ = 'run_artifacts'

    id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(Integer, ForeignKey('experiment_runs.id'), nullable=False)
    kind = Column(String(30), nullable=False)  # csv / metadata
    path = Column(String(500), nullable=False)
    rows = Column(Integer)

    # 관계
    run = relationship("ExperimentRun", back_populates="artifacts")
