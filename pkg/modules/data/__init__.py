"""
Data module - synthetic scene corpus, vocabulary, toy encoder and the annotation file format.
"""

from .scenes import (
    Description,
    Scene,
    SceneObject,
    SceneSpec,
    SceneSpecError,
    describe,
    generate_corpus,
    generate_scene,
    length_histogram,
    render_scene,
    split_corpus,
    template_arity,
    validate_spec,
)
from .vocabulary import Vocabulary, build_vocabulary, decode_caption, encode_caption
from .encoder import clean_features, encode_scene, scene_from_grid
from .annotation_io import (
    AnnotationDataset,
    AnnotationFormatError,
    AnnotationRecord,
    BadMagicError,
    NonFiniteDataError,
    TruncatedFileError,
    VersionMismatchError,
    decode_annotations,
    encode_annotations,
    read_annotations,
    write_annotations,
)
from .corpus import ImageGroup, build_dataset, group_records

__all__ = [
    'Description',
    'Scene',
    'SceneObject',
    'SceneSpec',
    'SceneSpecError',
    'describe',
    'generate_corpus',
    'generate_scene',
    'length_histogram',
    'render_scene',
    'split_corpus',
    'template_arity',
    'validate_spec',
    'Vocabulary',
    'build_vocabulary',
    'decode_caption',
    'encode_caption',
    'clean_features',
    'encode_scene',
    'scene_from_grid',
    'AnnotationDataset',
    'AnnotationFormatError',
    'AnnotationRecord',
    'BadMagicError',
    'NonFiniteDataError',
    'TruncatedFileError',
    'VersionMismatchError',
    'decode_annotations',
    'encode_annotations',
    'read_annotations',
    'write_annotations',
    'ImageGroup',
    'build_dataset',
    'group_records',
]
