"""Unit conversions.

Everything inside the package is in Hartree atomic units (hbar = 1).
Energies and angular frequencies are interchangeable.
"""

CM1_PER_AU = 219474.6313632  # wavenumbers per Hartree
FS_PER_AU = 0.02418884326505  # femtoseconds per atomic time unit


def cm1_to_au(value: float) -> float:
    """Wavenumber (cm^-1) to energy/angular frequency in atomic units."""
    return value / CM1_PER_AU


def au_to_cm1(value: float) -> float:
    return value * CM1_PER_AU


def fs_to_au(value: float) -> float:
    """Femtoseconds to atomic time units."""
    return value / FS_PER_AU


def au_to_fs(value: float) -> float:
    return value * FS_PER_AU
