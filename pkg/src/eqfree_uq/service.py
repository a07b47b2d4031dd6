"""HTTP front end: one POST endpoint per command, same outputs as the CLI."""
from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .config import U64_MAX, ConfigError
from .jobs import COMMANDS, run


class RunRequest(BaseModel):
    config: str = Field("", description="INI text; missing keys take their defaults")
    seed: int | None = Field(None, ge=0, le=U64_MAX)
    workers: int | None = Field(None, ge=1)


class RunResponse(BaseModel):
    command: str
    files: dict[str, str]
    summary: dict
    failure: str | None = None
    exit_code: int


app = FastAPI(title="eqfree-uq", version=__version__)


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__, "commands": sorted(COMMANDS)}


@app.post("/run/{command}", response_model=RunResponse)
def run_command(command: str, req: RunRequest) -> RunResponse:
    if command not in COMMANDS:
        raise HTTPException(status_code=404, detail=f"unknown command {command!r}")
    try:
        res = run(command, req.config, req.seed, req.workers)
    except ConfigError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from None
    return RunResponse(command=res.command, files=res.files, summary=res.summary,
                       failure=res.failure, exit_code=res.exit_code)
