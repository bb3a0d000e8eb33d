from setuptools import find_packages, setup

# Minimal setup.py for environments that default to legacy builds and need
# explicit python_requires plus the package list.

package_list = find_packages(
  include=[
    "polycgo",
    "polycgo.*",
    "run_config",
    "run_config.*",
    "entrypoints",
    "entrypoints.*",
  ]
)

setup(
  name="polycgo",
  version="0.1.0",
  description="Green operators, CGO solutions, DN maps and reconstruction for the perturbed polyharmonic operator",
  python_requires=">=3.11",
  packages=package_list,
  include_package_data=True,
  install_requires=[
    "numpy>=1.26",
    "scipy>=1.12",
    "pyyaml",
    "pydantic",
    "python-dotenv",
    "platformdirs",
  ],
  extras_require={
    "dev": ["pytest", "pytest-cov"],
  },
  entry_points={"console_scripts": ["polycgo = entrypoints.polycgo_cli:main"]},
)
