from setuptools import setup, find_packages

setup(
    name='hb-space',
    version='0.1.0',
    packages=find_packages(include=['src', 'src.*', 'scripts']),
    install_requires=[
        'click==8.1.3',
        'numpy==1.22.4',
        'scipy==1.8.1',
        'python-dotenv==0.20.0',
        'pyyaml==6.0'
    ],
    extras_require={
        'test': [
            'pytest==7.3.1',
            'pytest-cov==4.0.0'
        ]
    },
    entry_points={
        'console_scripts': [
            'hb-space=scripts.cli:main',
        ],
    },
    description='Norms, outer mates and inclusion diagnostics for finite-rank de Branges-Rovnyak spaces',
    long_description=open('README.md').read(),
    long_description_content_type='text/markdown',
    classifiers=[
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'License :: OSI Approved :: MIT License',
        'Operating System :: OS Independent',
    ],
    python_requires='>=3.8',
)
