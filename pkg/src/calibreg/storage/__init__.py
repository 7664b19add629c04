from calibreg.storage.configs import load_experiment, load_sweep, save_config
from calibreg.storage.datasets import read_dataset, read_inputs, write_dataset, write_inputs
from calibreg.storage.networks import load_network, save_network
from calibreg.storage.predictions import read_log, read_log_csv, read_log_json, write_log_csv, write_log_json
from calibreg.storage.reports import write_history_csv, write_json, write_models_csv, write_rows_csv


__all__ = [
    "load_experiment",
    "load_sweep",
    "save_config",
    "read_dataset",
    "read_inputs",
    "write_dataset",
    "write_inputs",
    "load_network",
    "save_network",
    "read_log",
    "read_log_csv",
    "read_log_json",
    "write_log_csv",
    "write_log_json",
    "write_history_csv",
    "write_json",
    "write_models_csv",
    "write_rows_csv",
]
