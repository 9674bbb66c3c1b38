import os
import sys
from setuptools import find_packages, setup

if sys.version_info < (3, 8):
    sys.exit('Sorry, Python < 3.8 is not supported.')


install_req = [
    'numpy',
    'torch>=2.0',
    'pandas',
    'scipy',
    'scikit-learn',
    'joblib',
    'pyyaml',
    'wandb',
    'pyinstrument',
    'packaging'
]

# Short readme for PyPI
HERE = os.path.abspath(os.path.dirname(__file__))
README_FOLDER = os.path.join(HERE, "readme")
with open(os.path.join(README_FOLDER, "pypi.md")) as fid:
    README = fid.read()

setup(
    name='povsim',
    version='1.0.0',
    description='Simulation harness for active label acquisition in poverty prediction',
    long_description=README,
    long_description_content_type='text/markdown',
    keywords='active learning, poverty prediction, query by committee, uncertainty sampling, fairness',
    license='MIT',
    install_requires=install_req,
    classifiers=[
            'Development Status :: 4 - Beta',
            'Intended Audience :: Science/Research',
            'License :: OSI Approved :: MIT License',
            'Programming Language :: Python',
            'Topic :: Scientific/Engineering :: Artificial Intelligence',
        ],
    include_package_data=True,
    extras_require={"test": ["pytest"]},
    entry_points={"console_scripts": ["povsim=povsim.__main__:main"]},
    scripts=[],
    packages=find_packages(exclude=("tests", )))
