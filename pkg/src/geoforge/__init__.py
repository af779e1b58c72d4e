"""Instruction-dataset builder and evaluation harness for oriented-box aerial imagery."""

from geoforge.annotations import Corpus, ImageMeta, ObbInstance, load_corpus, merge_pseudo_labels
from geoforge.attributes import AttributeConfig, AttributeSet, SizeLabel, extract_attributes
from geoforge.codec import SpatialToken, TaskToken, decode_response, decode_token, encode_token, render_response
from geoforge.expressions import Expression, phrase, sentence
from geoforge.forge import ForgeConfig, InstructionRecord, Task, generate
from geoforge.geometry import OrientedBox, contains, grid_position, normalize, denormalize, rotated_iou

__version__ = "0.1.0"

__all__ = [
    "AttributeConfig", "AttributeSet", "Corpus", "Expression", "ForgeConfig", "ImageMeta", "InstructionRecord",
    "ObbInstance", "OrientedBox", "SizeLabel", "SpatialToken", "Task", "TaskToken", "contains", "decode_response",
    "decode_token", "denormalize", "encode_token", "extract_attributes", "generate", "grid_position",
    "load_corpus", "merge_pseudo_labels", "normalize", "phrase", "render_response", "rotated_iou", "sentence",
]
