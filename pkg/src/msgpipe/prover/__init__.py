from .driver import (
    DEFAULT_PARALLELISM,
    DEFAULT_TIMEOUT,
    MockRule,
    ProverConfig,
    ToolNotFound,
    WorkspaceSetupFailed,
    parse_mock_rules,
    verify,
    verify_many,
)
from .guidance import (
    GuidanceRule,
    attribute_failure,
    builtin_rules,
    load_rules,
    match_guidance,
    parse_rules,
)
from .output import (
    CallStackTrace,
    Frame,
    ProverDiagnostic,
    ProverVerdict,
    VerdictKind,
    classify,
    parse_output,
    verdict_from_output,
)
