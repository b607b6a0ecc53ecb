from glob import glob

from setuptools import setup, find_packages

setup(
    name="honeyscope",
    version="0.1",
    packages=find_packages(exclude=['tests', 'tests.*']),
    install_requires=[
        # Core dependencies
        'numpy>=1.21.0',
        'scipy>=1.7.0',

        # Machine learning
        'scikit-learn>=1.0.0',
        'joblib>=1.1.0',
        'threadpoolctl>=3.0.0',

        # Slide images
        'Pillow>=9.1.0',
    ],
    extras_require={
        'tests': [
            'pytest>=7.0',
            # convolution oracle only; skipped when missing
            'torch>=1.13.0',
        ],
    },
    # found through honeyscope.utils.data_path
    data_files=[
        ('share/honeyscope/config', ['config/default.ini']),
        ('share/honeyscope/profiles', sorted(glob('profiles/*.json'))),
    ],
    entry_points={
        'console_scripts': [
            'honeyscope=honeyscope.cli:main',
        ],
    },
)
