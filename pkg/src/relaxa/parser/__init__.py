"""Experiment configuration grammar."""
from relaxa.parser.config_parser import (
    ConfigParseError,
    ExperimentConfig,
    InitSpec,
    dump_config,
    parse_config,
    parse_config_file,
)
