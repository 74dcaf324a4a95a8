from setuptools import find_packages, setup

"""
setup.py
mfglab - numerical laboratory for finite-state master equations

Copyright 2026 mfg-lab contributors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
"""

VERSION = "0.1.0"

install_requires = ["numpy >= 1.21"]
tests_require = ["scipy >= 1.7"]

setup(
    name="mfg-lab",
    version=VERSION,
    description="Numerical laboratory for finite-state master equations with common noise",
    long_description=open("README.md").read(),
    long_description_content_type="text/markdown",
    author="mfg-lab contributors",
    license="Apache-2.0",
    python_requires=">=3.8",
    extras_require={
        "test": ["scipy >= 1.7"],
        "docs": ["Sphinx >= 6.0", "sphinx_rtd_theme >= 1.1.0", "myst-parser >= 2.0.0"],
    },
    classifiers=[
        "Development Status :: 3 - Alpha",
        "License :: OSI Approved :: Apache Software License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Operating System :: OS Independent",
        "Topic :: Scientific/Engineering :: Mathematics",
        "Intended Audience :: Science/Research",
    ],
    keywords="mean field games master equation common noise monotonicity",
    entry_points={
        "console_scripts": [
            "mfg-lab=mfglab._cli:main",
        ],
    },
    install_requires=install_requires,
    packages=find_packages(exclude=("compliance",)),
    package_data={"mfglab.tests": ["data/*.json"]},
    tests_require=tests_require,
    test_suite="mfglab.tests",
)
