#!/usr/bin/env python3
"""
Test script to verify the Banach KL installation
"""
import importlib
import sys
from pathlib import Path

REQUIRED_PACKAGES = ["numpy", "scipy", "pandas", "dotenv", "pydantic", "pydantic_settings"]

REQUIRED_DIRS = [
    "backend",
    "backend/kernels",
    "backend/decomposition",
    "backend/sampling",
    "backend/conditioning",
    "backend/oracles",
    "backend/spectral",
    "backend/storage",
    "frontend",
    "frontend/cli",
]

REQUIRED_FILES = ["config.py", "requirements.txt", "run_app.py", "frontend/cli/main_cli.py"]

BACKEND_MODULES = [
    ("config", "Configuration"),
    ("backend.kernels.covariance_kernels", "Covariance kernels"),
    ("backend.decomposition.greedy_decomposition", "Greedy decomposition"),
    ("backend.decomposition.dual_basis", "Dual basis"),
    ("backend.sampling.kl_sampler", "KL sampler"),
    ("backend.conditioning.conditional_measure", "Conditioning"),
    ("backend.oracles.wiener_oracle", "Wiener oracle"),
    ("backend.spectral.hilbert_compare", "Spectral comparison"),
    ("backend.storage.artifact_store", "Artifact store"),
]

ROOT = Path(__file__).resolve().parent


def check_python_version():
    """Python 3.9+ is required"""
    version = sys.version_info
    ok = (version.major, version.minor) >= (3, 9)
    print(f"{'✅' if ok else '❌'} Python {version.major}.{version.minor}.{version.micro}")
    return ok


def check_dependencies():
    print("\n📦 Checking dependencies...")
    missing = []
    for package in REQUIRED_PACKAGES:
        try:
            importlib.import_module(package)
            print(f"✅ {package}")
        except ImportError:
            print(f"❌ {package} - Missing")
            missing.append(package)
    return missing


def check_project_structure():
    print("\n📁 Checking project structure...")
    missing = [item for item in REQUIRED_DIRS + REQUIRED_FILES if not (ROOT / item).exists()]
    for item in missing:
        print(f"❌ {item} - Missing")
    return missing


def check_backend_modules():
    print("\n🔧 Checking backend modules...")
    broken = []
    for module_name, display_name in BACKEND_MODULES:
        try:
            importlib.import_module(module_name)
            print(f"✅ {display_name}")
        except Exception as e:
            print(f"❌ {display_name} - Error: {str(e)[:50]}...")
            broken.append(module_name)
    return broken


def test_python_version():
    assert check_python_version()


def test_dependencies():
    assert check_dependencies() == []


def test_project_structure():
    assert check_project_structure() == []


def test_backend_modules():
    assert check_backend_modules() == []


def test_smoke_decomposition():
    """A level-2 Wiener run gives lambda = 1, 1/4, 1/8, 1/8"""
    from backend.decomposition.greedy_decomposition import decompose
    from backend.kernels.covariance_kernels import Grid, KernelSpec, discretize

    decomposition = decompose(discretize(KernelSpec.brownian_motion(), Grid.dyadic(2)))
    assert list(decomposition.lambdas) == [1.0, 0.25, 0.125, 0.125]


def main():
    print("📐 Banach KL - Installation Test")
    print("=" * 60)

    passed = check_python_version()
    missing = check_dependencies()
    if missing:
        passed = False
        print(f"\n❌ Missing dependencies: {', '.join(missing)}")
        print("Run: pip install -r requirements.txt")
    missing_items = check_project_structure()
    if missing_items:
        passed = False
    if check_backend_modules():
        passed = False

    print("\n" + "=" * 60)
    if passed:
        print("🎉 Installation test PASSED!")
        print("\n🚀 Ready to run: python run_app.py figure1")
    else:
        print("❌ Installation test FAILED!")
    print("\n📖 See README.md for usage")
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
