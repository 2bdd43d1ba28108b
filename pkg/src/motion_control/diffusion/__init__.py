"""
扩散过程模块
"""

from .schedule import NoiseSchedule, posterior_mean, q_sample, q_sample_batch
from .sampler import initial_noise, make_generator, reverse_step, sample

__all__ = [
    "NoiseSchedule",
    "posterior_mean",
    "q_sample",
    "q_sample_batch",
    "initial_noise",
    "make_generator",
    "reverse_step",
    "sample",
]
