"""
한줌 실행 기록 DB 연결 및 CRUD
"""
from contextlib import contextmanager
from typing import Any, Dict, List, Optional

from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker

from config import RESULTS_DB_PATH
from .models import Base, ExperimentRun, RunArtifact

DATABASE_URL = f"sqlite:///{RESULTS_DB_PATH}"

# 엔진 (init_db 에서 생성)
engine = None
SessionLocal = None


def run_to_dict(run: ExperimentRun) -> Dict[str, Any]:
    """ExperimentRun 객체를 딕셔너리로 변환"""
    return {
        'id': run.id,
        'experiment': run.experiment,
        'config_hash': run.config_hash,
        'config_path': run.config_path,
        'seed_offset': run.seed_offset,
        'output_dir': run.output_dir,
        'status': run.status,
        'row_count': run.row_count,
        'wall_time': run.wall_time,
        'message': run.message,
        'created_at': str(run.created_at) if run.created_at else None,
        'artifacts': [
            {'kind': a.kind, 'path': a.path, 'rows': a.rows} for a in run.artifacts
        ],
    }


def init_db(url: Optional[str] = None):
    """데이터베이스 초기화 (url 미지정 시 HANJUM_RESULTS_DB)"""
    global engine, SessionLocal
    url = url or DATABASE_URL
    engine = create_engine(url, echo=False)
    SessionLocal = sessionmaker(bind=engine)
    Base.metadata.create_all(engine)
    return engine


@contextmanager
def get_session():
    """세션 컨텍스트 매니저"""
    if SessionLocal is None:
        init_db()
    session = SessionLocal()
    try:
        yield session
        session.commit()
    except Exception as e:
        session.rollback()
        raise e
    finally:
        session.close()


# ========== 실행 기록 CRUD ==========

def record_run(
    experiment: str,
    config_hash: str,
    output_dir: str,
    artifacts: Optional[Dict[str, int]] = None,
    status: str = 'ok',
    seed_offset: int = 0,
    wall_time: Optional[float] = None,
    config_path: Optional[str] = None,
    message: Optional[str] = None
) -> Dict[str, Any]:
    """실행 1회와 출력 파일 기록, 저장된 내용을 딕셔너리로 반환

    artifacts: 파일 경로 → 행 수 (메타데이터 파일은 None)
    """
    artifacts = artifacts or {}
    with get_session() as session:
        run = ExperimentRun(
            experiment=experiment,
            config_hash=config_hash,
            config_path=config_path,
            seed_offset=seed_offset,
            output_dir=output_dir,
            status=status,
            row_count=sum(rows for rows in artifacts.values() if rows),
            wall_time=wall_time,
            message=message,
        )
        for path, rows in artifacts.items():
            kind = 'csv' if str(path).endswith('.csv') else 'metadata'
            run.artifacts.append(RunArtifact(kind=kind, path=str(path), rows=rows))
        session.add(run)
        session.flush()
        return run_to_dict(run)


def get_runs(experiment: str = None, limit: int = 50) -> List[Dict[str, Any]]:
    """최근 실행 목록"""
    with get_session() as session:
        query = session.query(ExperimentRun)
        if experiment:
            query = query.filter(ExperimentRun.experiment == experiment)
        runs = query.order_by(ExperimentRun.id.desc()).limit(limit).all()
        return [run_to_dict(r) for r in runs]


def get_run_by_hash(config_hash: str) -> Optional[Dict[str, Any]]:
    """같은 설정으로 마지막에 실행한 기록"""
    with get_session() as session:
        run = session.query(ExperimentRun).filter(
            ExperimentRun.config_hash == config_hash
        ).order_by(ExperimentRun.id.desc()).first()
        return run_to_dict(run) if run else None
