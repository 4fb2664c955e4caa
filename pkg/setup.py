from setuptools import find_packages, setup

with open("README.md") as fh:
    long_description = fh.read()

production_dependencies = ["pydantic>=2.0.0", "numpy>=1.22", "scipy>=1.8"]

development_dependencies = [
    "pre-commit>=2.17.0",
    "pytest>=7.0",
]

with open("requirements.txt", "w", encoding="utf-8") as f:
    f.write("\n".join(production_dependencies + development_dependencies))

setup(
    name="jumpfisher",
    description=(
        "Fisher information and parameter estimation from quantum jump"
        " detection records"
    ),
    long_description=long_description,
    long_description_content_type="text/markdown",
    version="0.1.0",
    license="AGPL-3.0",
    platforms="any",
    packages=find_packages(exclude=["tests", "utils"]),
    package_dir={"jumpfisher": "jumpfisher"},
    entry_points={"console_scripts": ["jumpfisher = jumpfisher.__main__:main"]},
    python_requires=">=3.8",
    install_requires=production_dependencies,
    extras_require={"dev": development_dependencies},
    zip_safe=False,
    keywords="quantum jumps fisher information metrology lindblad estimation",
    classifiers=[
        # More information at https://pypi.org/classifiers/.
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: GNU Affero General Public License v3",
        "Natural Language :: English",
        "Programming Language :: Python :: 3",
        "Topic :: Scientific/Engineering :: Physics",
    ],
)
