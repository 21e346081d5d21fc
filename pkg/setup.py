import os
import setuptools

dir_path = os.path.dirname(os.path.realpath(__file__))
with open(os.path.join(dir_path, "requirements.txt")) as f:
    required_packages = f.read().splitlines()
with open(os.path.join(dir_path, "README.md"), "r") as fh:
    long_description = fh.read()

setuptools.setup(
    name="coalitioncore",
    version="0.1.0",
    description="Core stable payments and allocations for coalition formation games",
    long_description=long_description,
    long_description_content_type="text/markdown",
    include_package_data=True,
    packages=setuptools.find_packages(include=["coalitioncore", "coalitioncore.*"]),
    package_data={"coalitioncore": ["config.json", "instances/*.json"]},
    install_requires=required_packages,
    python_requires=">=3.11",
    entry_points={"console_scripts": ["coalition-core=coalitioncore.cli:main"]},
    license="MIT",
    classifiers=[
        "Natural Language :: English",
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
    keywords=[
        "core stability",
        "coalition formation",
        "cost of stability",
        "configuration LP",
        "item auctions",
    ],
)
