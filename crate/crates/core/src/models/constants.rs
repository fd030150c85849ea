// Generated by oracle/freeze_constants.py. Do not edit by hand.

/// E_y[log gamma(y)] for the gauss-log model.
pub const GAUSS_LOG_TRUTH: f64 = -1.163843642195111;

/// gamma(0) for the gauss-log model.
pub const GAUSS_LOG_GAMMA_AT_ZERO: f64 = 0.3568248232305542;

/// gamma(1) for the gauss-log model.
pub const GAUSS_LOG_GAMMA_AT_ONE: f64 = 0.23918683193456397;

/// E_y[Var(phi(y, z) | y)] shared by gauss-log and its derived models.
pub const MEAN_INNER_VARIANCE: f64 = 0.08437188178201518;

/// E_y[(1 + y^2) gamma(y)] for the linear-gauss model.
pub const LINEAR_GAUSS_TRUTH: f64 = 0.4085364193687603;
