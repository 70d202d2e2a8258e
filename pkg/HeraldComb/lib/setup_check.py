#!/usr/bin/env python3
# HeraldComb: runs in a standard CPython 3.9+ environment.
"""
HeraldComb Setup Verification Script

Checks the Python version and that every package listed in requirements.txt
can be imported. Run it before the first simulation.
"""

import os
import subprocess
import sys

REQUIRED_PYTHON = (3, 9)

PACKAGE_TO_IMPORT_MAP = {
    "pytest": "pytest",
    "hypothesis": "hypothesis",
}


def requirements_file():
    """requirements.txt at the repository root (two levels above lib/)."""
    script_dir = os.path.dirname(os.path.abspath(__file__))
    return os.path.join(os.path.dirname(os.path.dirname(script_dir)), "requirements.txt")


def read_requirements(path=None):
    """Package names from a requirements file, without version specifiers."""
    path = path or requirements_file()
    packages = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            for separator in ("==", ">=", "<=", "~=", ">", "<", "["):
                line = line.split(separator, 1)[0]
            packages.append(line.strip())
    return packages


def check_python_version(version=None):
    """Check if Python version meets requirements."""
    version = version or sys.version_info
    if tuple(version[:2]) >= REQUIRED_PYTHON:
        print(f"✓ Python {version[0]}.{version[1]} (meets requirement {REQUIRED_PYTHON[0]}.{REQUIRED_PYTHON[1]}+)")
        return True
    print(f"✗ Python {version[0]}.{version[1]} (requires {REQUIRED_PYTHON[0]}.{REQUIRED_PYTHON[1]}+)")
    return False


def check_package(package_name):
    """Check if a package is installed and importable."""
    import_name = PACKAGE_TO_IMPORT_MAP.get(package_name, package_name.replace('-', '_'))
    try:
        __import__(import_name)
    except ImportError:
        print(f"✗ {package_name} (missing)")
        return False
    print(f"✓ {package_name}")
    return True


def missing_packages(packages=None):
    return [p for p in (packages or read_requirements()) if not check_package(p)]


def install_missing_packages(missing):
    """Install missing packages from requirements.txt with pip."""
    if not missing:
        return True
    path = requirements_file()
    if os.path.exists(path):
        cmd = [sys.executable, "-m", "pip", "install", "-r", path, "--quiet"]
    else:
        cmd = [sys.executable, "-m", "pip", "install"] + list(missing) + ["--quiet"]
    print(f"\nInstalling: {' '.join(missing)}")
    try:
        result = subprocess.run(cmd)
    except OSError as e:
        print(f"✗ Error installing packages: {e}")
        return False
    if result.returncode != 0:
        print(f"✗ pip exited with code {result.returncode}. Check the pip output above.")
        return False
    print("✓ Packages installed. Re-run this script to verify.")
    return True


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    print("HeraldComb Setup Verification")
    print("=" * 30)
    if not check_python_version():
        print("❌ Python version too old.")
        return False

    print("\nChecking required packages...")
    missing = missing_packages()
    if not missing:
        print("\n✓ All required packages are available!")
        return True

    print(f"\nFound {len(missing)} missing package(s): {', '.join(missing)}.")
    if "--install" in argv:
        install_missing_packages(missing)
    else:
        print(f"  Run: {sys.executable} -m pip install -r {requirements_file()}")
    return False


if __name__ == "__main__":
    sys.exit(0 if main() else 1)
