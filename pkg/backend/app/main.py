import json
import time
import uuid
from datetime import datetime
from typing import ClassVar, Literal

from fastapi import FastAPI, File, Form, HTTPException, Request, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from app.core.config import settings
from app.core.errors import BetaCovError
from app.core.logging_config import configure_logging, get_logger
from app.core.types import IngestSpec, KurtosisSpec, TestReport
from app.services.ingest import read_observations
from app.services.null_law import mean_variance, regime, spectral_params
from app.services.pipeline import TwoSampleTestService, versions
from app.services.result_store import load_result, save_result

configure_logging()
logger = get_logger("betacov.api")

app = FastAPI(title=settings.app_name, debug=settings.debug)


def _parse_origins(raw: str) -> list[str]:
    # Accepts either a JSON array or a comma-separated string
    val = raw.strip()
    if val.startswith("["):
        try:
            parsed = json.loads(val)
            if isinstance(parsed, list):
                return [str(o) for o in parsed]
        except ValueError:
            pass
    return [o.strip() for o in val.split(",") if o.strip()]


origins = ["*"] if settings.debug else _parse_origins(settings.allowed_origins)
app.add_middleware(
    CORSMiddleware,
    allow_origins=origins or ["*"],
    allow_credentials="*" not in origins,
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.middleware("http")
async def log_requests(request: Request, call_next):
    start = time.time()
    request_id = request.headers.get("X-Request-ID", str(uuid.uuid4()))
    try:
        response = await call_next(request)
    except Exception as e:
        duration_ms = int((time.time() - start) * 1000)
        get_logger("betacov.request").exception(
            f"Unhandled error for {request.method} {request.url.path} after {duration_ms}ms: {e}",
            extra={"request_id": request_id, "elapsed_ms": duration_ms},
        )
        raise
    duration_ms = int((time.time() - start) * 1000)
    response.headers["X-Request-ID"] = request_id
    get_logger("betacov.request").info(
        f"{request.method} {request.url.path} -> {response.status_code} in {duration_ms}ms",
        extra={"request_id": request_id, "elapsed_ms": duration_ms},
    )
    return response


@app.exception_handler(BetaCovError)
async def domain_error_handler(request: Request, exc: BetaCovError):
    logger.warning(f"request_rejected path={request.url.path} error_type={type(exc).__name__} error={exc}")
    return JSONResponse(status_code=422, content={"detail": str(exc), "error_type": type(exc).__name__})


test_service = TwoSampleTestService()


class TestResponse(BaseModel):
    __test__: ClassVar[bool] = False

    job_id: str
    status: Literal["completed", "failed"]
    report: TestReport | None = None
    error: str | None = None


class ParamsResponse(BaseModel):
    regime: str
    y1: float
    y2: float
    h: float
    x_l: float
    x_r: float
    ell1: float
    ell2: float
    mu: float
    sigma2: float
    warnings: list[str]


@app.get("/")
async def root():
    return {"message": settings.app_name, "version": versions()["betacov"]}


@app.get("/healthz")
async def health_check():
    return {"status": "healthy", "timestamp": datetime.now().isoformat()}


@app.get("/api/params", response_model=ParamsResponse)
async def params(n1: int, n2: int, p: int, delta1: float = 0.0, delta2: float = 0.0):
    sp = spectral_params(n1, n2, p)
    law = mean_variance(sp, KurtosisSpec(delta1, delta2))
    return ParamsResponse(
        regime=regime(sp),
        y1=sp.y1,
        y2=sp.y2,
        h=sp.h,
        x_l=sp.x_l,
        x_r=sp.x_r,
        ell1=law.ell1,
        ell2=law.ell2,
        mu=law.mu,
        sigma2=law.sigma2,
        warnings=list(sp.warnings),
    )


@app.post("/api/test", response_model=TestResponse)
async def run_test(
    sample1: UploadFile = File(...),
    sample2: UploadFile = File(...),
    centering: Literal["sample-mean", "known-zero-mean"] = Form("sample-mean"),
    delta1: float | None = Form(None),
    delta2: float | None = Form(None),
    level: float = Form(settings.level),
    sidedness: Literal["two-sided", "upper"] = Form(settings.sidedness),
    delimiter: str = Form(","),
    header: bool = Form(True),
    transpose: bool = Form(False),
):
    max_size = settings.max_upload_size_mb * 1024 * 1024
    payloads = []
    for upload in (sample1, sample2):
        content = await upload.read()
        if len(content) > max_size:
            raise HTTPException(
                status_code=400,
                detail=f"File too large. Maximum size: {settings.max_upload_size_mb}MB",
            )
        payloads.append(content)
    if (delta1 is None) != (delta2 is None):
        raise HTTPException(status_code=400, detail="delta1 and delta2 must be given together")

    job_id = str(uuid.uuid4())
    ingest = IngestSpec(delimiter=delimiter, header=header, transpose=transpose, centering=centering)
    x1 = read_observations(payloads[0], ingest)
    x2 = read_observations(payloads[1], ingest)
    report = test_service.run(
        x1,
        x2,
        centering=centering,
        kurtosis=None if delta1 is None else KurtosisSpec(delta1, delta2),
        level=level,
        sidedness=sidedness,
    )
    try:
        save_result(job_id, report)
    except OSError:
        get_logger("betacov.result_store").exception("Failed to persist test report")
    return TestResponse(job_id=job_id, status="completed", report=report)


@app.get("/api/result/{job_id}")
async def get_result(job_id: str):
    data = load_result(job_id)
    if data is None:
        raise HTTPException(status_code=404, detail="Result not found")
    return data
