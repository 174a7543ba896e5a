"""
Script de démarrage de l'API
"""
import asyncio
import logging

import uvicorn

from app.config import settings
from app.database import init_db

# Importer les modèles pour que SQLAlchemy crée les tables
from app.models import RunRecord  # noqa: F401

logger = logging.getLogger(__name__)


async def main():
    """Initialisation du registre"""
    await init_db()
    logger.info("Registre des exécutions initialisé")


if __name__ == "__main__":
    logging.basicConfig(level=settings.LOG_LEVEL,
                        format="%(asctime)s %(levelname)s %(name)s : %(message)s")
    asyncio.run(main())

    logger.info("Serveur démarré sur http://localhost:8000 (documentation : /docs)")
    uvicorn.run(
        "app.main:app",
        host="0.0.0.0",
        port=8000,
        reload=settings.DEBUG,
        log_level=settings.LOG_LEVEL.lower()
    )
