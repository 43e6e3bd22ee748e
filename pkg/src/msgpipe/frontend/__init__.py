from .ast import *  # noqa: F401,F403
from .lexer import MoveSyntaxError, UnsupportedConstruct
from .parser import (
    canonical_block,
    merge_spec_unit,
    parse,
    parse_expr,
    parse_function,
    parse_many,
    parse_spec_items,
    parse_units,
)
from .printer import (
    clause_str,
    pretty_print,
    print_const,
    print_expr,
    print_function,
    print_modules,
    print_spec_block,
    print_spec_fun,
    print_struct,
    type_str,
)
from .check import Diagnostic, Workspace, check_function, check_spec_block, check_wellformed
from .loader import SourceError, load_workspace, move_files
