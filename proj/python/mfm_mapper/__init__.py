# Copyright 2026 The MFM Mapper Authors. All Rights Reserved.
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


"""Visual-to-audio embedding mapper on a synthetic world."""

from ._core import (
    ArgumentError,
    ConfigError,
    Error,
    FormatError,
    IoError,
    NumericError,
    ValidationError,
    evaluate,
    frechet_distance,
    generate_dataset,
    load_dataset,
    mean_predictor_mse,
    predict,
    train,
    upsample,
)

__all__ = [
    "ArgumentError",
    "ConfigError",
    "Error",
    "FormatError",
    "IoError",
    "NumericError",
    "ValidationError",
    "evaluate",
    "frechet_distance",
    "generate_dataset",
    "load_dataset",
    "mean_predictor_mse",
    "predict",
    "train",
    "upsample",
]
