from stagewise.terminate.conditions import (
    CONDITIONS,
    SimulatorProbe,
    StageContext,
    Thresholds,
    caging_check,
    evaluate_condition,
    make_context,
)

__all__ = ["CONDITIONS", "SimulatorProbe", "StageContext", "Thresholds", "caging_check",
           "evaluate_condition", "make_context"]
