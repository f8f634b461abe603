from .copula import fit_vine_command, gof_command, simulate_command
from .data import describe_command, fit_marginals_command
from .evaluation import es_test_command, regress_command, var_test_command
from .portfolio import backtest_command, in_sample_command, optimize_command

COMMANDS = {
    "describe": describe_command,
    "fit-marginals": fit_marginals_command,
    "fit-vine": fit_vine_command,
    "gof": gof_command,
    "simulate": simulate_command,
    "optimize": optimize_command,
    "backtest": backtest_command,
    "in-sample": in_sample_command,
    "var-test": var_test_command,
    "es-test": es_test_command,
    "regress": regress_command,
}
