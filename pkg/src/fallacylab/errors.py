"""Exception types shared across the pipeline."""


class FallacyLabError(Exception):
    """Base class for all package-level errors."""


# taxonomy
class UnknownClass(FallacyLabError):
    """A fallacy class name is not present in the taxonomy."""


class ExcludedClass(FallacyLabError):
    """The fine class is flagged as excluded from coarse-grained experiments."""


# corpus
class SchemaError(FallacyLabError):
    """A dataset file is empty or missing required columns."""


class LabelError(FallacyLabError):
    """A dataset row carries a label outside the taxonomy."""


class TooFewSamples(FallacyLabError):
    """A class has fewer items than the number of requested splits."""


class UnmappedTechnique(FallacyLabError):
    """A propaganda-technique label has no configured fine-class mapping."""


# augment
class EmptyClass(FallacyLabError):
    """A quota class has zero original arguments to augment from."""


# retrieval
class DuplicateId(FallacyLabError):
    """Two case-base entries share an id."""


class EncoderFailure(FallacyLabError):
    """Encoding failed; the underlying cause is chained."""


# models
class ShapeMismatch(FallacyLabError):
    """Tensor shapes are incompatible for the requested operation."""


class TooFewPrototypes(FallacyLabError):
    """Prototype budget is smaller than classes + negatives."""


# curriculum
class MissingStageData(FallacyLabError):
    """A curriculum stage has no dataset configured."""


class ArchitectureMismatch(FallacyLabError):
    """Encoder weights cannot be transferred between incompatible models."""


# evalreport
class LengthMismatch(FallacyLabError):
    """Gold and predicted label sequences differ in length."""


class UnknownLabel(FallacyLabError):
    """A label falls outside the declared label space."""


class HeterogeneousReports(FallacyLabError):
    """Reports being aggregated disagree on task, dataset, or method."""


class LabelSpaceMismatch(FallacyLabError):
    """Zero-shot target labels are not a subset of the model's label space."""


# cli
class UnknownKnob(FallacyLabError):
    """A sweep grid key is not a recognized ablation knob."""


class UnsupportedMethod(FallacyLabError):
    """The requested operation is not available for this method."""


class ConfigError(FallacyLabError):
    """A run configuration is invalid or references missing files."""
