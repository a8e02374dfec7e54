//! Named scenarios, stored as configuration text so each doubles as a
//! format example. Referenced as `builtin:NAME` on the command line.

const A0_WIENER_LINEAR: &str = r#"
[space]
dim = 2
norm_exponent = 2.0
moment_exponent = 2.0

[time]
horizon = 1.0
steps = 10

[model]
kind = "tree"
seed = 0

[generator]
kind = "zero"

[driver]
kind = "zero"

[terminal]
kind = "wiener_linear"
x = [3.0, 4.0]

[solver]
kind = "a0"
tol = 1e-10
"#;

const A0_CONSTANT_DRIFT: &str = r#"
[space]
dim = 2
norm_exponent = 2.0
moment_exponent = 2.0

[time]
horizon = 1.0
steps = 10

[model]
kind = "tree"
seed = 0

[generator]
kind = "zero"

[driver]
kind = "constant"
x = [1.0, -2.0]

[terminal]
kind = "zero"

[solver]
kind = "a0"
"#;

const A0_WIENER_SQUARE: &str = r#"
[space]
dim = 1
norm_exponent = 2.0
moment_exponent = 2.0

[time]
horizon = 1.0
steps = 12

[model]
kind = "tree"
seed = 0

[generator]
kind = "zero"

[driver]
kind = "zero"

[terminal]
kind = "wiener_square"
x = [1.0]

[solver]
kind = "a0"
"#;

const LINEAR_FLOW: &str = r#"
[space]
dim = 3
norm_exponent = 2.0
moment_exponent = 2.0

[time]
horizon = 1.0
steps = 10

[model]
kind = "tree"
seed = 0

[generator]
kind = "tridiag_laplacian"
scale = 1.0

[driver]
kind = "zero"

[terminal]
kind = "constant"
x = [1.0, 0.0, -1.0]

[solver]
kind = "linear"
"#;

const LINEAR_WIENER_FLOW: &str = r#"
[space]
dim = 2
norm_exponent = 2.0
moment_exponent = 2.0

[time]
horizon = 1.0
steps = 10

[model]
kind = "tree"
seed = 0

[generator]
kind = "rotation"
omega = 1.0

[driver]
kind = "zero"

[terminal]
kind = "wiener_linear"
x = [1.0, 0.5]

[solver]
kind = "linear"
"#;

const LINEAR_DRIFT_SCALAR: &str = r#"
[space]
dim = 1
norm_exponent = 2.0
moment_exponent = 2.0

[time]
horizon = 1.0
steps = 16

[model]
kind = "paths"
path_count = 20000
seed = 0

[generator]
kind = "diag"
values = [1.0]

[driver]
kind = "wiener_linear"
x = [1.0]

[terminal]
kind = "zero"

[solver]
kind = "linear"
"#;

const LINEAR_DRIFT_SCALAR_TREE: &str = r#"
[space]
dim = 1
norm_exponent = 2.0
moment_exponent = 2.0

[time]
horizon = 1.0
steps = 16

[model]
kind = "tree"
seed = 0

[generator]
kind = "diag"
values = [1.0]

[driver]
kind = "wiener_linear"
x = [1.0]

[terminal]
kind = "zero"

[solver]
kind = "linear"
"#;

const PICARD_DECAY_AU: &str = r#"
[space]
dim = 2
norm_exponent = 2.0
moment_exponent = 2.0

[time]
horizon = 1.0
steps = 16

[model]
kind = "tree"
seed = 0

[generator]
kind = "matrix"
entries = [0.3, 1.0, -1.0, 0.3]

[driver]
kind = "affine"
u_coeff = 0.5

[terminal]
kind = "constant"
x = [1.0, 2.0]

[solver]
kind = "picard"
delta = 0.125
tol = 1e-8
"#;

const PICARD_SIN: &str = r#"
[space]
dim = 2
norm_exponent = 2.0
moment_exponent = 2.0

[time]
horizon = 1.0
steps = 10

[model]
kind = "tree"
seed = 0

[generator]
kind = "matrix"
entries = [0.3, 1.0, -1.0, 0.3]

[driver]
kind = "sin_u"
lipschitz = 0.8

[terminal]
kind = "wiener_square"
x = [1.0, 0.0]

[solver]
kind = "picard"
delta = 0.1
tol = 1e-8
"#;

const ORACLE_SIN: &str = r#"
[space]
dim = 2
norm_exponent = 2.0
moment_exponent = 2.0

[time]
horizon = 1.0
steps = 10

[model]
kind = "tree"
seed = 0

[generator]
kind = "matrix"
entries = [0.3, 1.0, -1.0, 0.3]

[driver]
kind = "sin_u"
lipschitz = 0.8

[terminal]
kind = "wiener_square"
x = [1.0, 0.0]

[solver]
kind = "oracle"
tol = 1e-8
"#;

const PICARD_TANH_LQ: &str = r#"
[space]
dim = 2
norm_exponent = 3.0
moment_exponent = 2.5

[time]
horizon = 1.0
steps = 8

[model]
kind = "tree"
seed = 7

[generator]
kind = "rotation"
omega = 1.0

[driver]
kind = "tanh_uv"
lipschitz = 0.5

[terminal]
kind = "call_like"
strike = 0.0
x = [1.0, -1.0]

[solver]
kind = "picard"
delta = 0.125
tol = 1e-8
"#;

const CALL_LIKE_TREE: &str = r#"
[space]
dim = 1
norm_exponent = 2.0
moment_exponent = 2.0

[time]
horizon = 1.0
steps = 12

[model]
kind = "tree"
seed = 0

[generator]
kind = "diag"
values = [0.2]

[driver]
kind = "affine"
u_coeff = 0.1
v_coeff = 0.1

[terminal]
kind = "call_like"
strike = 0.0
x = [1.0]

[solver]
kind = "picard"
delta = 0.25
tol = 1e-8
"#;

const PATHS_CALL_LIKE: &str = r#"
[space]
dim = 1
norm_exponent = 2.0
moment_exponent = 2.0

[time]
horizon = 1.0
steps = 12

[model]
kind = "paths"
path_count = 20000
seed = 42

[generator]
kind = "diag"
values = [0.2]

[driver]
kind = "zero"

[terminal]
kind = "call_like"
strike = 0.0
x = [1.0]

[solver]
kind = "linear"
"#;

const ZERO: &str = r#"
[space]
dim = 2
norm_exponent = 2.0
moment_exponent = 2.0

[time]
horizon = 1.0
steps = 8

[model]
kind = "tree"
seed = 0

[generator]
kind = "rotation"
omega = 1.0

[driver]
kind = "zero"

[terminal]
kind = "zero"

[solver]
kind = "picard"
"#;

const CATALOG: &[(&str, &str)] = &[
    ("a0_wiener_linear", A0_WIENER_LINEAR),
    ("a0_constant_drift", A0_CONSTANT_DRIFT),
    ("a0_wiener_square", A0_WIENER_SQUARE),
    ("linear_flow", LINEAR_FLOW),
    ("linear_wiener_flow", LINEAR_WIENER_FLOW),
    ("linear_drift_scalar", LINEAR_DRIFT_SCALAR),
    ("linear_drift_scalar_tree", LINEAR_DRIFT_SCALAR_TREE),
    ("picard_decay_aU", PICARD_DECAY_AU),
    ("picard_sin", PICARD_SIN),
    ("oracle_sin", ORACLE_SIN),
    ("picard_tanh_lq", PICARD_TANH_LQ),
    ("call_like_tree", CALL_LIKE_TREE),
    ("paths_call_like", PATHS_CALL_LIKE),
    ("zero", ZERO),
];

pub fn builtin(name: &str) -> Option<&'static str> {
    CATALOG.iter().find(|(n, _)| *n == name).map(|(_, t)| t.trim_start())
}

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    CATALOG.iter().map(|(n, _)| *n)
}
