from setuptools import setup, find_packages

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setup(
    name="da-seq2seq-nlg",
    version="0.1.0",
    description="Sequence-to-sequence generation of sentences and deep syntax trees from dialogue acts",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests", "tests.*", "examples", "examples.*"]),
    install_requires=[
        "numpy>=1.22",
        "pydantic>=2.0.0",
        "pyyaml>=6.0",
        "jsonschema>=4.0",
        "rich>=12.0",
    ],
    entry_points={
        "console_scripts": [
            "nlg-experiment=tools.cli.cli_runner:main",
        ],
    },
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
    ],
    python_requires=">=3.9",
)
