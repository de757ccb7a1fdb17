from fastapi import FastAPI

from lcvn import __version__
from lcvn.api import health, plan

app = FastAPI(title="LCVN Planner Service", version=__version__)

app.include_router(plan.router)
app.include_router(health.router)
