"""Sky-image air quality estimation.

Images are float64 arrays in [0, 1] with shape (H, W) or (H, W, C); uint8
arrays are rescaled on the way in.
"""

import numpy as _np

from . import _skycast
from ._skycast import (
    WORKING_SIZE,
    Model,
    SkycastError,
    composite_aqi,
    convolve_2d,
    decode_image,
    evaluate,
    frechet_distance,
    gabor_kernels,
    generate_synthetic_dataset,
    grade_of_aqi,
    grades,
    load_image,
    render_base_sky,
    shape_chain,
    stratified_split,
    sub_index,
    train,
)

__all__ = [
    "WORKING_SIZE", "Model", "SkycastError", "composite_aqi", "convolve_2d", "decode_image", "encode_png",
    "evaluate", "extract_features", "frechet_distance", "gabor_kernels", "generate_synthetic_dataset",
    "grade_of_aqi", "grades", "load_image", "magnitude_response", "render_base_sky", "render_variant",
    "shape_chain", "sky_mask", "ssim", "stratified_split", "sub_index", "train",
]


def _image(a):
    a = _np.asarray(a)
    if a.dtype == _np.uint8:
        return a.astype(_np.float64) / 255.0
    return a


def encode_png(image):
    return _skycast.encode_png(_image(image))


def sky_mask(image):
    return _skycast.sky_mask(_image(image))


def magnitude_response(image, theta, freq):
    return _skycast.magnitude_response(_image(image), theta, freq)


def extract_features(image):
    return _skycast.extract_features(_image(image))


def render_variant(image, target, seed=0, source="Good"):
    return _skycast.render_variant(_image(image), target, seed, source)


def ssim(a, b):
    return _skycast.ssim(_image(a), _image(b))
