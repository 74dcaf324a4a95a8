"""
_exceptions.py
mfglab - numerical laboratory for finite-state master equations

Copyright 2026 mfg-lab contributors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
"""

__all__ = [
    "MfgLabException",
    "GridException",
    "FieldException",
    "CouplingException",
    "NoiseException",
    "CflException",
    "BlowUpException",
    "SingularJumpException",
    "DensityException",
    "EffectiveDiffusionException",
    "ConfigException",
]


class MfgLabException(Exception):
    """
    mfglab exception class.
    """

    pass


class GridException(MfgLabException):
    """
    If a grid axis is degenerate (upper <= lower or fewer than 2 nodes),
    this exception will be raised.
    """

    def __init__(self, message: str, axis: int) -> None:
        super().__init__(message)
        self.axis = axis


class FieldException(MfgLabException):
    """
    If field values are not finite or do not match their grid,
    this exception will be raised.
    """

    pass


class CouplingException(MfgLabException):
    """
    If a coupling certificate cannot be verified, this exception will be raised.
    """

    pass


class NoiseException(MfgLabException):
    """
    If a noise specification is invalid, this exception will be raised.
    """

    pass


class CflException(MfgLabException):
    """
    CflException will be raised when an explicit step is asked for with a
    time step above the stability limit of the scheme.
    """

    def __init__(
        self, message: str, max_drift: float, dt: float = None, limit: float = None
    ) -> None:
        super().__init__(message)
        self.max_drift = max_drift
        self.dt = dt
        self.limit = limit


class BlowUpException(MfgLabException):
    """
    BlowUpException will be raised when a marched field exceeds the blow-up cap
    or stops being finite.
    """

    def __init__(self, message: str, time: float) -> None:
        super().__init__(message)
        self.time = time


class SingularJumpException(MfgLabException):
    """
    SingularJumpException will be raised when a jump map has to be inverted
    but its linear part is singular.
    """

    def __init__(self, message: str, condition_number: float) -> None:
        super().__init__(message)
        self.condition_number = condition_number


class DensityException(MfgLabException):
    """
    DensityException will be raised when a Fokker-Planck sweep produces a
    negative density.
    """

    def __init__(self, message: str, time: float) -> None:
        super().__init__(message)
        self.time = time


class EffectiveDiffusionException(MfgLabException):
    """
    EffectiveDiffusionException will be raised when the corrected
    Fokker-Planck equation stops being parabolic.
    """

    def __init__(self, message: str, x: float, m: float) -> None:
        super().__init__(message)
        self.x = x
        self.m = m


class ConfigException(MfgLabException):
    """
    If a scenario configuration is invalid, this exception will be raised.
    """

    def __init__(self, message: str, valid_names: list = None) -> None:
        super().__init__(message)
        self.valid_names = valid_names
