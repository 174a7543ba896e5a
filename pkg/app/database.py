"""
Registre des exécutions : une table SQLite (aiosqlite) alimentée par la
ligne de commande et lue par l'API
"""
from typing import List

from sqlalchemy import select
from sqlalchemy.ext.asyncio import create_async_engine, AsyncSession, async_sessionmaker
from sqlalchemy.orm import DeclarativeBase
from sqlalchemy.pool import NullPool

from app.config import settings

# Une connexion par session : la CLI ouvre une boucle asyncio par exécution
engine = create_async_engine(settings.DATABASE_URL, echo=settings.DEBUG, poolclass=NullPool)
registry_session = async_sessionmaker(engine, class_=AsyncSession, expire_on_commit=False)


class Base(DeclarativeBase):
    pass


async def init_db():
    """Créer la table run_records si besoin"""
    from app.models import run_record  # noqa: F401  RunRecord sur Base.metadata

    async with engine.begin() as conn:
        await conn.run_sync(Base.metadata.create_all)


async def get_db():
    """Session de lecture pour les routes"""
    async with registry_session() as session:
        yield session


async def add_run(record) -> int:
    """Inscrire une exécution ; rend son identifiant"""
    await init_db()
    async with registry_session() as session:
        session.add(record)
        await session.commit()
        return record.id


async def latest_runs(session: AsyncSession, limit: int) -> List:
    from app.models.run_record import RunRecord

    result = await session.execute(
        select(RunRecord).order_by(RunRecord.created_at.desc(), RunRecord.id.desc()).limit(limit)
    )
    return list(result.scalars().all())
