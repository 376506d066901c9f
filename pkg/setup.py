"""
Setup script for grape-pulse-engine.
"""

from setuptools import setup, find_packages

setup(
    name="grape-pulse-engine",
    packages=find_packages(where="src"),
    package_dir={"": "src"},
)
