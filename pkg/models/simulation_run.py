from datetime import datetime
from typing import List, Optional

from sqlalchemy import Column, DateTime, String, Text, delete, select

from models.database import Base, DatabaseManager
from models.run_status import RunStatus
from models.run_summary import RunSummary


class SimulationRun(Base):
    __tablename__ = 'simulation_runs'

    run_id = Column(String(50), primary_key=True)
    command = Column(String(30), nullable=False)
    network_file = Column(Text, nullable=True)
    scenario_file = Column(Text, nullable=True)
    config_json = Column(Text, nullable=True)
    output_dir = Column(Text, nullable=True)
    created_at = Column(DateTime, default=datetime.utcnow)

    def __repr__(self):
        return f"<SimulationRun(run_id='{self.run_id}', command='{self.command}')>"

    def to_dict(self):
        return {
            'run_id': self.run_id,
            'command': self.command,
            'network_file': self.network_file,
            'scenario_file': self.scenario_file,
            'config_json': self.config_json,
            'output_dir': self.output_dir,
            'created_at': self.created_at.isoformat() if self.created_at else None
        }


class SimulationRunHelper:

    def __init__(self):
        self.db_manager = DatabaseManager()

    def create_run(self, run_id: str, command: str, network_file: str = None, scenario_file: str = None,
                   config_json: str = None, output_dir: str = None) -> SimulationRun:
        with self.db_manager.session_scope() as session:
            run = SimulationRun(run_id=run_id, command=command, network_file=network_file,
                                scenario_file=scenario_file, config_json=config_json, output_dir=output_dir)
            session.add(run)
            session.commit()
            session.refresh(run)
            return run

    def get_run_by_id(self, run_id: str) -> Optional[SimulationRun]:
        with self.db_manager.session_scope() as session:
            return session.get(SimulationRun, run_id)

    def get_all_runs(self) -> List[SimulationRun]:
        with self.db_manager.session_scope() as session:
            return list(session.scalars(select(SimulationRun).order_by(SimulationRun.created_at)))

    def delete_run(self, run_id: str) -> bool:
        """Remove a run together with its status and summary rows."""
        with self.db_manager.session_scope() as session:
            run = session.get(SimulationRun, run_id)
            if run is None:
                return False
            session.execute(delete(RunStatus).where(RunStatus.run_id == run_id))
            session.execute(delete(RunSummary).where(RunSummary.run_id == run_id))
            session.delete(run)
            session.commit()
            return True
