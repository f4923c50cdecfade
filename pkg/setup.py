from setuptools import setup, find_packages

install_requires = [
    "numpy>=1.20",
    "scipy>=1.6",
    "pandas>=1.5",
    "pyyaml>=5.1",
    "munch>=2.0.4",
    "tqdm>=4.36",
]

with open("README.md", "r") as fh:
    long_description = fh.read()

setup(
    name='wgpulse',
    version='0.1.0',
    description='Few-photon pulses scattering off a two-level emitter in a waveguide: '
                'ODE and time-bin MPS engines with spectra',
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages('.', exclude=['test', 'test.*']),
    package_data={'wgpulse': ['resources/*.yaml', 'resources/*.txt']},
    include_package_data=True,
    entry_points={
            'console_scripts': [
                'wgpulse = wgpulse.main:main'
            ]
    },
    install_requires=install_requires,
    python_requires='>=3.8',
    zip_safe=False,
)
