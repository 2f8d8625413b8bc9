"""Numerical evaluation of Poisson-geometric operators over point meshes."""

__version__ = "0.1.0"

from .expressions import (  # noqa: F401
    CompiledFunction,
    Expression,
    ExpressionError,
    UnboundParameterError,
    compile_expression,
    differentiate,
    parse,
    partial_eval,
    to_source,
)
from .geometry import (  # noqa: F401
    BatchResult,
    Mesh,
    Multivector,
    MultivectorError,
    as_mesh,
    corners_mesh,
    load_mesh,
    random_mesh,
    save_mesh,
    validate_multivector,
)
from .symbolic import (  # noqa: F401
    NormalFormClass,
    SymbolicMatrix,
    bivector_to_matrix_sym,
    curl_sym,
    flaschka_ratiu_sym,
    linear_normal_form_r3,
    modular_vf_sym,
    one_forms_bracket_sym,
    schouten_coboundary,
    sharp_sym,
)
from .evaluate import (  # noqa: F401
    GAUGE_SINGULAR_TOLERANCE,
    EvalOptions,
    MeshDimensionError,
    num_bivector,
    num_bivector_to_matrix,
    num_coboundary_operator,
    num_curl_operator,
    num_flaschka_ratiu_bivector,
    num_gauge_transformation,
    num_hamiltonian_vf,
    num_linear_normal_form_r3,
    num_modular_vf,
    num_one_forms_bracket,
    num_poisson_bracket,
    num_sharp_morphism,
    prepare_bivector,
    prepare_bivector_to_matrix,
    prepare_coboundary_operator,
    prepare_curl_operator,
    prepare_flaschka_ratiu_bivector,
    prepare_gauge_transformation,
    prepare_hamiltonian_vf,
    prepare_linear_normal_form_r3,
    prepare_modular_vf,
    prepare_one_forms_bracket,
    prepare_poisson_bracket,
    prepare_sharp_morphism,
)
from .bench import (  # noqa: F401
    BenchCase,
    TimingReport,
    benchmark_suite,
    fit_loglog,
    run_benchmark,
    time_method,
)
