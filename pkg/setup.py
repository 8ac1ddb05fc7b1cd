from io import open
from setuptools import setup


version = '1.0.0'
name = 'tensorlogic'


with open('README.md', encoding='utf-8') as f:
    long_description = f.read()

setup(
    name=name,
    version=version,

    description=(
        'Logical rules as tensor equations: Datalog closure, relation-matrix '
        'embeddings and compositional link prediction'
    ),
    long_description=long_description,
    long_description_content_type='text/markdown',

    license='Apache License, Version 2.0',

    packages=[name],
    python_requires='>=3.8',
    install_requires=[
        'loguru',
        'the-retry',
        'numpy>=1.22',
        'scipy>=1.8',
        'pandas>=1.4',
        'tqdm',
    ],
    extras_require={
        'dev': [
            'flake8==4.0.1',
            'mypy==0.961',
            'pytest>=7.0',
            'hypothesis>=6.0',
        ],
    },

    entry_points={
        'console_scripts': [
            'tensorlogic=tensorlogic.cli:main',
        ],
    },

    classifiers=[
        'License :: OSI Approved :: Apache Software License',
        'Operating System :: OS Independent',
        'Intended Audience :: Science/Research',
        'Intended Audience :: Developers',
        'Programming Language :: Python',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
        'Programming Language :: Python :: 3.12',
        'Programming Language :: Python :: Implementation :: CPython',
    ]
)
