from .lexer import LangError, tokenize
from .parser import parse, parse_file
from .printer import format_expr, format_stmt, print_program
from .validate import check, validate

__all__ = ["LangError", "tokenize", "parse", "parse_file", "format_expr",
           "format_stmt", "print_program", "check", "validate"]
