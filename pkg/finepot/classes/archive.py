'''
Optional SQLAlchemy archive of scenario runs.
Enabled with --archive URI or FINEPOT_ARCHIVE_URI, e.g. sqlite:///finepot_runs.db
'''

import datetime
import json
import logging

import sqlalchemy
import sqlalchemy.orm
from sqlalchemy import select

import finepot.classes.tables as tables
from finepot.classes.errors import ConfigError
from finepot.core.dumps import to_jsonable

_LOGGER = logging.getLogger(__name__)


class RunArchive:
    def __init__(self, uri: str):
        self.uri = uri
        self.engine = None
        self.session = None

    def connect(self):
        """
        Connect to the archive database and create the tables if needed.

        Returns:
            engine: sqlalchemy engine object
        """
        try:
            self.engine = sqlalchemy.create_engine(self.uri)
            tables.Base.metadata.create_all(self.engine)
        except Exception as e:
            raise ConfigError(f"Error connecting to the run archive {self.uri}: {e}") from e
        _LOGGER.info("Connected to run archive %s", self.uri)
        self.session = sqlalchemy.orm.Session(self.engine)
        return self.engine

    def record(self, report) -> int:
        """Store a RunReport with one TaskRecord per task; returns the run id."""
        data = report.to_dict()
        with self.session as session:
            run = tables.Run(
                Scenario=data['scenario'],
                Seed=int(data['seed']),
                ExitCode=int(data['exit_code']),
                Started=datetime.datetime.fromisoformat(data['started']),
                WallTime=float(data['wall_time']),
                Version=data['tool_version'],
                OutDir=data.get('out_dir'),
                Config=json.dumps(to_jsonable(data['config']), sort_keys=True),
            )
            for task in data['tasks']:
                run.Tasks.append(tables.TaskRecord(
                    Name=task['task'],
                    Kind=task['kind'],
                    Status=task['status'],
                    WallTime=float(task.get('wall_time', 0.0)),
                    Result=json.dumps(to_jsonable(task.get('result', {})), sort_keys=True),
                ))
            session.add(run)
            session.commit()
            session.refresh(run)
            return run.id

    def list_runs(self, limit: int = 20) -> list[dict]:
        """Most recent runs first."""
        with self.session as session:
            runs = session.execute(
                select(tables.Run).order_by(tables.Run.id.desc()).limit(limit)
            ).scalars().all()
            result = []
            for run in runs:
                result.append({
                    "id": run.id,
                    "scenario": run.Scenario,
                    "seed": run.Seed,
                    "exit_code": run.ExitCode,
                    "started": run.Started.isoformat(),
                    "wall_time": run.WallTime,
                    "tasks": len(run.Tasks),
                    "out_dir": run.OutDir,
                })
            return result

    def get_run(self, run_id: int) -> dict | None:
        with self.session as session:
            run = session.execute(
                select(tables.Run).where(tables.Run.id == run_id)
            ).scalar_one_or_none()
            if run is None:
                return None
            return {
                "id": run.id,
                "scenario": run.Scenario,
                "seed": run.Seed,
                "exit_code": run.ExitCode,
                "config": json.loads(run.Config),
                "tasks": [
                    {"name": t.Name, "kind": t.Kind, "status": t.Status,
                     "wall_time": t.WallTime, "result": json.loads(t.Result)}
                    for t in run.Tasks
                ],
            }
