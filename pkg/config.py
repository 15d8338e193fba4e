"""
한줌 설정
"""
import os
from dotenv import load_dotenv

load_dotenv()

# 앱 정보
APP_NAME = "한줌"
APP_VERSION = "1.0.0"

# 출력 / 로그
OUTPUT_DIR = os.getenv("HANJUM_OUTPUT_DIR", "results")
LOG_LEVEL = os.getenv("HANJUM_LOG_LEVEL", "INFO")

# 실행 기록 DB (SQLite)
RESULTS_DB_PATH = os.getenv(
    "HANJUM_RESULTS_DB",
    os.path.join(os.path.dirname(__file__), "database", "hanjum.db")
)

# 월드 프리셋 / 실험 설정 파일 위치
CONFIG_DIR = os.path.join(os.path.dirname(__file__), "data", "configs")

# ========== 수치 설정 ==========

# log 안에 들어가는 값의 하한 (τ)
LIKELIHOOD_FLOOR = 1e-300

# 단순화 스케줄 (N^s / N), 마지막은 반드시 1.0
DEFAULT_SCHEDULE = (0.1, 0.2, 0.4, 0.8, 1.0)

# 루트 리샘플링 기준: ESS < N * ratio
ESS_RESAMPLE_RATIO = 0.5

# KDE 대역폭 하한 (분산이 0인 경우)
KDE_BANDWIDTH_FLOOR = 1e-3

# 엔트로피 실험의 고정 단순화 비율
STUDY_FRACTIONS = (0.1, 0.5, 0.9)

# ========== 플래닝 벤치마크 ==========

# POMCP 형태 트리의 rollout 수
DEFAULT_POMCP_ROLLOUTS = 5

# 정확 플래너 1회 시간 제한 (초)
PLAN_TIME_BUDGET = float(os.getenv("HANJUM_PLAN_TIME_BUDGET", "35"))

# 기본 실험 매트릭스
DEFAULT_PARTICLE_COUNTS = (20, 50, 100, 200)
DEFAULT_SEEDS = (0, 1, 2, 3, 4)

# 트리 형태별 horizon 목록
DEFAULT_HORIZONS = {
    "despot": (1, 2, 3),
    "powss": (1, 2),
    "pomcp": (5, 10, 15),
}

BUILDERS = ("despot", "powss", "pomcp")
EXPERIMENTS = ("entropy-study", "plan-bench", "receding-run")
