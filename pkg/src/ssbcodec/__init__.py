"""Group-decoupled image codec with a selectively decodable bitstream."""

from .codec import (DecodeReport, EncodeReport, decode_groups, decode_latents,
                    encode_image)
from .config import CodecConfig, config_from_text, config_to_text
from .container import extract_groups, read_ssb, segment_layout
from .errors import (AnnotationError, AvailabilityError, CompatibilityError,
                     CorruptStreamError, DimensionError, FormatError,
                     KeyRequiredError, SelectionError, SequencingError,
                     SsbError)
from .groupmask import (AnnotationSet, GroupMask, Region, build_mask,
                        deserialize_rle, load_annotations, present_ids,
                        serialize_rle)
from .metrics import RegionSpec, bpp, mse, psnr
from .transform import RuntimeModel
from .weights import ModelWeights, init_weights, load_weights, save_weights

__version__ = "0.1.0"

__all__ = [
    "AnnotationError", "AnnotationSet", "AvailabilityError", "CodecConfig",
    "CompatibilityError", "CorruptStreamError", "DecodeReport",
    "DimensionError", "EncodeReport", "FormatError", "GroupMask",
    "KeyRequiredError", "ModelWeights", "Region", "RegionSpec",
    "RuntimeModel", "SelectionError", "SequencingError", "SsbError",
    "__version__", "bpp", "build_mask", "config_from_text", "config_to_text",
    "decode_groups", "decode_latents", "deserialize_rle", "encode_image",
    "extract_groups", "init_weights", "load_weights", "load_annotations",
    "mse", "present_ids", "psnr", "read_ssb", "save_weights",
    "segment_layout", "serialize_rle",
]
