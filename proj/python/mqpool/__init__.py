# SPDX-License-Identifier: Apache-2.0
# Copyright 2026 The mqpool Authors
"""Masked and multi-query multi-head attentive pooling."""

from ._mqpool import *  # noqa: F401,F403
from ._mqpool import __doc__  # noqa: F401

__version__ = "0.1.0"
