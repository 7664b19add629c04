from calibreg.commands.calibrate.calibrate import calibrate_model
from calibreg.commands.gen_data.gen_data import gen_data
from calibreg.commands.report.report import report_logs
from calibreg.commands.sweep.sweep import sweep_experiment
from calibreg.commands.train.train import train_experiment


__all__ = ["gen_data", "train_experiment", "sweep_experiment", "calibrate_model", "report_logs"]
