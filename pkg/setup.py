from setuptools import setup, find_packages

VERSION = '0.1.0'
DESCRIPTION = "Peridynamics-based statistical multiscale fracture of particle-reinforced composites"
LONG_DESCRIPTION = "peristat generates random particle microstructures, corrects their peridynamic bond stiffness against finite element strain energy, extracts a directional critical stretch and a homogenized elasticity tensor per sample, aggregates them over many samples and drives a coarse macro peridynamic fracture simulation with the equivalent micromodulus."

# Setting up
setup(
    name="peristat",
    version=VERSION,
    description=DESCRIPTION,
    long_description=LONG_DESCRIPTION,
    packages=find_packages(exclude=["examples", "examples.*"]),
    install_requires=[
        'setuptools>=60.9.0',
        'numpy>=1.22',
        'scipy>=1.12',
        'pandas>=1.4.4',
        'tqdm>=4.64',
    ],
    extras_require={
        'test': ['pytest>=7.0'],
    },
    entry_points={
        'console_scripts': ['peristat=peristat.cli:main'],
    },
    package_data={'peristat': ['templates/*.json']},

    keywords=['python', 'peridynamics', 'fracture', 'multiscale', 'homogenization', 'composites', 'finite element'],
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Physics",
        "Programming Language :: Python :: 3",
        "Operating System :: OS Independent",
    ],
    include_package_data=True
)
