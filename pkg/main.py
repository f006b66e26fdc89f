import logging

from fastapi import FastAPI

from app.api.routers import evaluation, links, metrics, prediction, routing, scenario
from app.core.config import Base, engine, settings
from app.core.exceptions import register_exception_handlers
from app.core.logging_config import configure_logging

import app.models  # noqa: F401  registers every table on Base.metadata

configure_logging(settings.LOG_LEVEL)
logger = logging.getLogger(__name__)

# =====================================================================
# CREATE APP
# =====================================================================

app = FastAPI(
    title=settings.APP_NAME,
    debug=settings.DEBUG,
    description="Predictive V2X routing engine: link prediction, top-3 routing and verification",
    version="1.0.0",
)

register_exception_handlers(app)

# =====================================================================
# DATABASE INITIALIZATION
# =====================================================================

Base.metadata.create_all(bind=engine)

# =====================================================================
# HEALTH CHECK (before routers)
# =====================================================================


@app.get("/health")
def health_check():
    """Health check endpoint."""
    return {"status": "healthy"}


# =====================================================================
# ROUTES
# =====================================================================

app.include_router(scenario.router)
app.include_router(links.router)
app.include_router(prediction.router)
app.include_router(routing.router)
app.include_router(metrics.router)
app.include_router(evaluation.router)

logger.info("All routers included")

# =====================================================================
# ROOT ENDPOINT
# =====================================================================


@app.get("/")
def root():
    """API root endpoint."""
    return {
        "message": f"Welcome to {settings.APP_NAME}",
        "version": "1.0.0",
        "docs": "/docs",
        "endpoints": {
            "scenario": "/scenario",
            "links": "/links",
            "prediction": "/prediction",
            "routing": "/routing",
            "metrics": "/metrics",
            "evaluation": "/evaluation",
        },
    }
