from setuptools import setup, find_packages

setup(
    name="creditlab",
    version="1.0.0",
    packages=find_packages(where="src"),
    package_dir={"": "src"},
    py_modules=["cli"],
    install_requires=[
        "numpy>=1.21",
    ],
    entry_points={
        'console_scripts': [
            'creditlab=cli:main',
        ],
    },
    python_requires=">=3.8",
)
