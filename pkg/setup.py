# copyright ################################# #
# This file is part of the Xgam Package.      #
# Copyright (c) Xgam developers, 2024.        #
# ########################################### #

from setuptools import setup
from pathlib import Path

version_file = Path(__file__).parent / "xgam/_version.py"
dd = {}
with open(version_file.absolute(), "r") as fp:
    exec(fp.read(), dd)
__version__ = dd["__version__"]


setup(
    name="xgam",
    version=__version__,
    description="Gradient attention on point clouds with compiled CPU kernels",
    long_description=(
        "Farthest point sampling, neighborhood search, zenith/azimuth "
        "gradients and a gradient attention layer for point clouds"
    ),
    author="Xgam developers",
    python_requires=">=3.7",
    setup_requires=[],
    install_requires=["numpy", "cffi", "scipy"],
    packages=["xgam"],
    package_data={"xgam": ["headers/*.h"]},
    license="Apache 2.0",
    entry_points={"console_scripts": ["xgam=xgam.cli:main"]},
    extras_require={
        "tests": ["pytest", "pytest-mock"],
    },
)
