"""Process matrices, free operations, switch conversion and distillation."""
from .conversion import plan_deterministic, plan_filter
from .covering import CoveringDesign, build_covering_design
from .distillation import SwitchBasisState, filter_distill_rate, multicopy_distill
from .freeops import FreeOperation, apply, build_loae, build_pls, check_nso, sequence
from .linalg import FactorLabel, LabeledOperator, PureProcess
from .process import ProcessMatrix, is_compatible_order, is_entangled_control_target, is_valid_process, link_product
from .switches import (
    GeneralizedSwitchSpec,
    make_fixed_order,
    make_generalized_switch,
    make_quantum_switch,
    make_w_ent,
)

__all__ = [
    "CoveringDesign", "FactorLabel", "FreeOperation", "GeneralizedSwitchSpec", "LabeledOperator",
    "ProcessMatrix", "PureProcess", "SwitchBasisState", "apply", "build_covering_design",
    "build_loae", "build_pls", "check_nso", "filter_distill_rate", "is_compatible_order",
    "is_entangled_control_target", "is_valid_process", "link_product", "make_fixed_order",
    "make_generalized_switch", "make_quantum_switch", "make_w_ent", "multicopy_distill",
    "plan_deterministic", "plan_filter", "sequence",
]
