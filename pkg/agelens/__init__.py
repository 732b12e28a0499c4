# Copyright © 2024 age-lens contributors
# SPDX-License-Identifier: MIT

"""Estimate target ages from product reviews and use them to post-filter recommendations."""

__version__ = "0.1.0"
GENERATOR = "age-lens"
