"""Exception and warning types raised across the package."""


class HRFError(Exception):
    """Base class for numerical errors raised by the estimators and models."""


class ConfigError(HRFError, ValueError):
    """Invalid experiment, scene or band configuration."""


class DuplicateAngle(HRFError, ValueError):
    pass


class RankOverflow(HRFError, ValueError):
    pass


class IllConditioned(HRFError):
    pass


class NotHermitian(HRFError, ValueError):
    pass


class InvalidDivisor(ConfigError):
    pass


class TooFewAntennas(HRFError):
    pass


class DegenerateCovariance(TooFewAntennas):
    """All covariances are (numerically) zero; no subspace can be extracted."""


class AllPointsDegenerate(HRFError):
    """Every grid point was excluded by the Rayleigh-ratio denominator guard."""


class TargetInvisibleEverywhere(HRFError):
    pass


class DegenerateProjection(HRFError):
    """The dominant singular vector lies (almost) inside the nulled span."""


class Unidentifiable(HRFError):
    """The Fisher information matrix is rank deficient."""


class LengthMismatch(HRFError, ValueError):
    pass


class DegenerateGapWarning(RuntimeWarning):
    """Requested singular subspace is not unique (no gap after rank r)."""


class FlatSpectrumWarning(RuntimeWarning):
    pass
