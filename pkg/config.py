"""
Configuration settings for the Banach Karhunen-Loeve toolkit
"""
import os
from dotenv import load_dotenv
from pydantic_settings import BaseSettings

# Load environment variables
load_dotenv()

class Settings(BaseSettings):
    # Parallelism (0 means one worker per CPU)
    BANACH_KL_THREADS: int = 0

    # Run defaults
    DEFAULT_DYADIC_LEVEL: int = 6
    DEFAULT_MAX_STEPS: int = 16
    DEFAULT_LAMBDA_TOL: float = 1e-12  # relative to lambda_0
    DEFAULT_SAMPLES: int = 10_000
    DEFAULT_SEED: int = 20240607

    # Numerical tolerances
    PSD_RELATIVE_TOL: float = 1e-10
    SYMMETRY_RELATIVE_TOL: float = 1e-8
    RECONSTRUCTION_TOL: float = 1e-9
    BIORTHOGONALITY_TOL: float = 1e-8
    PROJECTION_TOL: float = 1e-10
    VERIFY_RESIDUAL_PSD: bool = True

    # Sampling
    SAMPLER_BIT_GENERATOR: str = "PCG64"
    SAMPLE_CHUNK_SIZE: int = 8192

    # Artifacts
    OUTPUT_DIRECTORY: str = os.getenv("OUTPUT_DIRECTORY", "./data/runs")
    FORMAT_VERSION: str = "1.0"

    # Logging
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")

    class Config:
        env_file = ".env"
        extra = "ignore"

# Global settings instance
settings = Settings()
