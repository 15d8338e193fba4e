from .db import (
    init_db, get_session,
    record_run, get_runs, get_run_by_hash, run_to_dict
)
from .models import ExperimentRun, RunArtifact
