"""Exception hierarchy for the exporter."""


class ExporterError(Exception):
    """Base class for everything this package raises on purpose."""


class ModelLoadError(ExporterError):
    """The checkpoint could not be loaded or is not a usable encoder."""


class PatchFormatError(ExporterError):
    """A patch values file or its manifest violates the TSPX layout."""


class DimensionMismatchError(ExporterError):
    """The job's declared embedding dim differs from the model's hidden size."""


class ConfigurationError(ExporterError):
    """An ExportJob field is out of its allowed range."""
