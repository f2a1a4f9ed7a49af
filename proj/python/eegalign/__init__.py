# Copyright (c) 2026 The eegalign Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Python access to the eegalign core (signal ops, metrics, config, CLI)."""

from ._core import (
    CHANNELS,
    SAMPLE_RATE,
    WINDOW,
    Error,
    balanced_accuracy,
    cohens_kappa,
    config_ini,
    default_config,
    irfft,
    parse_config,
    pseudo_embed,
    rfft,
    run_cli,
    spectral_mask,
)

__all__ = [
    "CHANNELS",
    "SAMPLE_RATE",
    "WINDOW",
    "Error",
    "balanced_accuracy",
    "cohens_kappa",
    "config_ini",
    "default_config",
    "irfft",
    "parse_config",
    "pseudo_embed",
    "rfft",
    "run_cli",
    "spectral_mask",
]
