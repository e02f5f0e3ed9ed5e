from datetime import datetime
from typing import List, Optional

from sqlalchemy import Column, DateTime, Float, ForeignKey, Integer, String, Text, select
from sqlalchemy.orm import relationship

from models.database import Base, DatabaseManager


class RunSummary(Base):
    __tablename__ = 'run_summaries'

    run_id = Column(String(50), ForeignKey('simulation_runs.run_id'), primary_key=True)
    steps = Column(Integer, nullable=True)
    simulated_seconds = Column(Float, nullable=True)
    max_relative_residual = Column(Float, nullable=True)
    policy_event_count = Column(Integer, default=0)
    observed_order = Column(Float, nullable=True)
    final_pressures = Column(Text, nullable=True)
    created_at = Column(DateTime, default=datetime.utcnow)

    simulation_run = relationship("SimulationRun", backref="run_summary")

    def __repr__(self):
        return f"<RunSummary(run_id='{self.run_id}', steps={self.steps})>"

    def to_dict(self):
        return {
            'run_id': self.run_id,
            'steps': self.steps,
            'simulated_seconds': self.simulated_seconds,
            'max_relative_residual': self.max_relative_residual,
            'policy_event_count': self.policy_event_count,
            'observed_order': self.observed_order,
            'final_pressures': self.final_pressures,
            'created_at': self.created_at.isoformat() if self.created_at else None
        }


class RunSummaryHelper:


    def __init__(self):
        self.db_manager = DatabaseManager()

    def create_run_summary(self, run_id: str, steps: int = None, simulated_seconds: float = None,
                           max_relative_residual: float = None, policy_event_count: int = 0,
                           observed_order: float = None, final_pressures: str = None) -> RunSummary:
        with self.db_manager.session_scope() as session:
            summary = RunSummary(run_id=run_id, steps=steps, simulated_seconds=simulated_seconds,
                                 max_relative_residual=max_relative_residual,
                                 policy_event_count=policy_event_count, observed_order=observed_order,
                                 final_pressures=final_pressures)
            session.add(summary)
            session.commit()
            session.refresh(summary)
            return summary

    def get_run_summary_by_id(self, run_id: str) -> Optional[RunSummary]:
        with self.db_manager.session_scope() as session:
            return session.get(RunSummary, run_id)

    def get_all_run_summaries(self) -> List[RunSummary]:
        with self.db_manager.session_scope() as session:
            return list(session.scalars(select(RunSummary).order_by(RunSummary.created_at)))
