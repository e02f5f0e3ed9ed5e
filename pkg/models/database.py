import logging
import os
from contextlib import contextmanager
from typing import Iterator

from dotenv import load_dotenv
from sqlalchemy import create_engine
from sqlalchemy.orm import Session, declarative_base, sessionmaker

load_dotenv()

logger = logging.getLogger(__name__)

DATABASE_URL = os.getenv('DATABASE_URL', 'sqlite:///simulation_runs.db')

engine = create_engine(DATABASE_URL, echo=False)
SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)
Base = declarative_base()


class DatabaseManager:
    """Run-registry storage.

    The module-level engine and session factory are looked up on every call, so
    tests can point the registry at a scratch database by patching them.
    """

    def create_tables(self):
        Base.metadata.create_all(bind=engine)

    def get_session(self) -> Session:
        return SessionLocal()

    @contextmanager
    def session_scope(self) -> Iterator[Session]:
        """Session for one helper call; rolled back on error, always closed.

        Helpers commit explicitly so returned rows stay loaded after close.
        """
        session = self.get_session()
        try:
            yield session
        except Exception as e:
            session.rollback()
            logger.error(f"❌ Run registry transaction rolled back: {e}")
            raise
        finally:
            session.close()
