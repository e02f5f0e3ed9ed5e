import enum
import logging
from datetime import datetime
from typing import List, Optional

from sqlalchemy import Column, DateTime, Enum, Float, ForeignKey, String, Text, select
from sqlalchemy.orm import relationship

from models.database import Base, DatabaseManager

logger = logging.getLogger(__name__)

UPDATABLE_FIELDS = {'stage', 'error_message', 'completed_at', 'duration_seconds', 'run_metadata'}


class RunStatusEnum(enum.Enum):
    IN_PROGRESS = "in-progress"
    COMPLETED = "completed"
    FAILED = "failed"


class RunStatus(Base):
    __tablename__ = 'run_statuses'

    run_id = Column(String(50), ForeignKey('simulation_runs.run_id'), primary_key=True)
    status = Column(Enum(RunStatusEnum), nullable=False, default=RunStatusEnum.IN_PROGRESS)
    stage = Column(String(100), nullable=True)
    error_message = Column(Text, nullable=True)
    started_at = Column(DateTime, default=datetime.utcnow)
    completed_at = Column(DateTime, nullable=True)
    duration_seconds = Column(Float, nullable=True)
    run_metadata = Column(Text, nullable=True)
    updated_at = Column(DateTime, default=datetime.utcnow, onupdate=datetime.utcnow)

    simulation_run = relationship("SimulationRun", backref="run_status")

    def __repr__(self):
        return f"<RunStatus(run_id='{self.run_id}', status='{self.status.value}')>"

    def to_dict(self):
        return {
            'run_id': self.run_id,
            'status': self.status.value if self.status else None,
            'stage': self.stage,
            'error_message': self.error_message,
            'started_at': self.started_at.isoformat() if self.started_at else None,
            'completed_at': self.completed_at.isoformat() if self.completed_at else None,
            'duration_seconds': self.duration_seconds,
            'run_metadata': self.run_metadata,
            'updated_at': self.updated_at.isoformat() if self.updated_at else None
        }


class RunStatusHelper:

    def __init__(self):
        self.db_manager = DatabaseManager()

    def create_run_status(self, run_id: str, status: RunStatusEnum = RunStatusEnum.IN_PROGRESS,
                          stage: str = None, run_metadata: str = None) -> RunStatus:
        with self.db_manager.session_scope() as session:
            run_status = RunStatus(run_id=run_id, status=status, stage=stage, run_metadata=run_metadata)
            session.add(run_status)
            session.commit()
            session.refresh(run_status)
            return run_status

    def get_run_status_by_id(self, run_id: str) -> Optional[RunStatus]:
        with self.db_manager.session_scope() as session:
            return session.get(RunStatus, run_id)

    def get_runs_by_status(self, status: RunStatusEnum) -> List[RunStatus]:
        with self.db_manager.session_scope() as session:
            return list(session.scalars(select(RunStatus).where(RunStatus.status == status)))

    def update_run_status(self, run_id: str, status: RunStatusEnum, **fields) -> Optional[RunStatus]:
        """Set the status and any of stage, error_message, completed_at, duration_seconds, run_metadata.

        None values leave the stored column unchanged; an unknown run returns None.
        """
        unknown = set(fields) - UPDATABLE_FIELDS
        if unknown:
            raise ValueError(f"Cannot update run status fields {sorted(unknown)}")
        with self.db_manager.session_scope() as session:
            run_status = session.get(RunStatus, run_id)
            if run_status is None:
                logger.warning(f"⚠️ No status row for run {run_id}")
                return None
            run_status.status = status
            for name, value in fields.items():
                if value is not None:
                    setattr(run_status, name, value)
            run_status.updated_at = datetime.utcnow()
            session.commit()
            session.refresh(run_status)
            return run_status

    def update_stage(self, run_id: str, stage: str) -> Optional[RunStatus]:
        return self.update_run_status(run_id, RunStatusEnum.IN_PROGRESS, stage=stage)

    def mark_as_completed(self, run_id: str, duration_seconds: float = None,
                          run_metadata: str = None) -> Optional[RunStatus]:
        return self.update_run_status(run_id, RunStatusEnum.COMPLETED, stage='done', completed_at=datetime.utcnow(),
                                      duration_seconds=duration_seconds, run_metadata=run_metadata)

    def mark_as_failed(self, run_id: str, error_message: str, duration_seconds: float = None,
                       run_metadata: str = None) -> Optional[RunStatus]:
        return self.update_run_status(run_id, RunStatusEnum.FAILED, error_message=error_message,
                                      completed_at=datetime.utcnow(), duration_seconds=duration_seconds,
                                      run_metadata=run_metadata)
