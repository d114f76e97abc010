"""SMT-LIB2 text encoding of :mod:`bv` expressions and a solver subprocess session.

The session talks to any SMT-LIB2 solver over stdin/stdout (z3 by default).
``SEPE_SMT_SOLVER`` overrides the command line, e.g. ``"cvc5 --incremental"``.
"""
from __future__ import annotations

import logging
import os
import re
import selectors
import shlex
import shutil
import subprocess
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from . import bv
from .bv import Expr

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT_MS = 60_000
SOLVER_ENV = "SEPE_SMT_SOLVER"

SAT, UNSAT, UNKNOWN = "sat", "unsat", "unknown"


class SmtError(RuntimeError):
    pass


class SolverError(SmtError):
    """The solver process died, refused a command or replied with garbage."""


class SolverNotFound(SmtError):
    pass


_SMT_OPS = {
    "add": "bvadd", "sub": "bvsub", "mul": "bvmul", "and": "bvand", "or": "bvor",
    "xor": "bvxor", "shl": "bvshl", "lshr": "bvlshr", "ashr": "bvashr", "not": "bvnot",
}
_SMT_CMP = {"ult": "bvult", "slt": "bvslt", "eq": "="}
_SIMPLE_SYMBOL = re.compile(r"^[A-Za-z~!@$%^&*_+=<>.?/-][0-9A-Za-z~!@$%^&*_+=<>.?/-]*$")


def symbol(name: str) -> str:
    if _SIMPLE_SYMBOL.match(name):
        return name
    if "|" in name or "\\" in name:
        raise SmtError(f"cannot quote symbol {name!r}")
    return f"|{name}|"


def sort(width: int) -> str:
    return f"(_ BitVec {width})"


def literal(value: int, width: int) -> str:
    return f"(_ bv{value & bv.mask(width)} {width})"


def _node_text(node: Expr, child: list[str], naming: Mapping[str, str] | None) -> str:
    op = node.op
    if op == "const":
        return literal(node.params[0], node.width)
    if op == "var":
        name = node.params[0]
        if naming is not None:
            if name not in naming:
                raise SmtError(f"variable {name!r} has no symbol")
            return symbol(naming[name])
        return symbol(name)
    if op in _SMT_OPS:
        return f"({_SMT_OPS[op]} {' '.join(child)})"
    if op in _SMT_CMP:
        return f"(ite ({_SMT_CMP[op]} {child[0]} {child[1]}) #b1 #b0)"
    if op == "ite":
        return f"(ite (= {child[0]} #b1) {child[1]} {child[2]})"
    if op == "sext":
        return f"((_ sign_extend {node.width - node.args[0].width}) {child[0]})"
    if op == "zext":
        return f"((_ zero_extend {node.width - node.args[0].width}) {child[0]})"
    if op == "extract":
        return f"((_ extract {node.params[0]} {node.params[1]}) {child[0]})"
    raise SmtError(f"unsupported node {op!r}")


def encode(expr: Expr, naming: Mapping[str, str] | None = None) -> str:
    """SMT-LIB2 term for ``expr``; subterms used more than once are let-bound."""
    order = bv.postorder([expr])
    uses: dict[int, int] = {}
    for node in order:
        for a in node.args:
            uses[id(a)] = uses.get(id(a), 0) + 1
    text: dict[int, str] = {}
    bindings: list[tuple[str, str]] = []
    for node in order:
        body = _node_text(node, [text[id(a)] for a in node.args], naming)
        if node.args and uses.get(id(node), 0) > 1 and node is not expr:
            name = f"?e{len(bindings)}"
            bindings.append((name, body))
            text[id(node)] = name
        else:
            text[id(node)] = body
    out = text[id(expr)]
    for name, body in reversed(bindings):
        out = f"(let (({name} {body})) {out})"
    return out


def assertion(expr: Expr, naming: Mapping[str, str] | None = None) -> str:
    """Term text asserting a 1-bit expression is true."""
    if expr.width != 1:
        raise bv.WidthError("only 1-bit expressions can be asserted")
    return f"(= {encode(expr, naming)} #b1)"


def _parse_sexpr(text: str):
    tokens = re.findall(r"\(|\)|\|[^|]*\||[^\s()]+", text)
    stack: list[list] = [[]]
    for tok in tokens:
        if tok == "(":
            stack.append([])
        elif tok == ")":
            if len(stack) == 1:
                raise SolverError(f"unbalanced reply: {text!r}")
            done = stack.pop()
            stack[-1].append(done)
        else:
            stack[-1].append(tok)
    if len(stack) != 1:
        raise SolverError(f"unbalanced reply: {text!r}")
    return stack[0]


def _parse_value(tok) -> int:
    if isinstance(tok, str):
        if tok.startswith("#x"):
            return int(tok[2:], 16)
        if tok.startswith("#b"):
            return int(tok[2:], 2)
    elif len(tok) == 3 and tok[0] == "_" and tok[1].startswith("bv"):
        return int(tok[1][2:])
    raise SolverError(f"cannot parse bit-vector value {tok!r}")


@dataclass
class CheckResult:
    status: str
    model: dict[str, int] = field(default_factory=dict)
    elapsed_ms: float = 0.0
    reason: str = ""

    @property
    def sat(self) -> bool:
        return self.status == SAT

    @property
    def unsat(self) -> bool:
        return self.status == UNSAT

    @property
    def unknown(self) -> bool:
        return self.status == UNKNOWN


def solver_command(solver: str | None = None) -> list[str]:
    """Resolve the solver command: explicit argument, then the environment, then z3 on PATH."""
    spec = solver or os.environ.get(SOLVER_ENV) or "z3"
    argv = shlex.split(spec)
    exe = shutil.which(argv[0])
    if exe is None:
        raise SolverNotFound(f"SMT solver {argv[0]!r} not found (set {SOLVER_ENV})")
    argv[0] = exe
    base = os.path.basename(exe)
    if base.startswith("z3") and "-in" not in argv:
        argv += ["-in", "-smt2"]
    elif base.startswith("cvc5") and "--lang" not in " ".join(argv):
        argv += ["--lang=smt2", "--incremental"]
    return argv


class SmtSession:
    """One solver process with a scoped symbol table.

    Not thread-safe; use one session per worker.
    """

    def __init__(self, solver: str | None = None, timeout_ms: int = DEFAULT_TIMEOUT_MS,
                 logic: str = "QF_BV", rlimit: int | None = None):
        self.argv = solver_command(solver)
        self.timeout_ms = timeout_ms
        self.rlimit = rlimit
        self.logic = logic
        self.calls = 0
        self._proc: subprocess.Popen | None = None
        self._buffer = b""
        self._scopes: list[dict[str, int]] = [{}]
        self._start()

    # process management

    def _start(self) -> None:
        self._proc = subprocess.Popen(
            self.argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, stderr=subprocess.STDOUT)
        self._buffer = b""
        self._scopes = [{}]
        self._preamble()

    def _preamble(self) -> None:
        self._send("(set-option :print-success false)")
        self._send("(set-option :produce-models true)")
        if os.path.basename(self.argv[0]).startswith("z3"):
            self._send(f"(set-option :timeout {int(self.timeout_ms)})")
            if self.rlimit:
                # a deterministic work budget, unlike the wall-clock timeout
                self._send(f"(set-option :rlimit {int(self.rlimit)})")
        self._send(f"(set-logic {self.logic})")

    def close(self) -> None:
        if self._proc is not None:
            try:
                self._proc.stdin.write(b"(exit)\n")
                self._proc.stdin.flush()
                self._proc.wait(timeout=2)
            except (OSError, subprocess.TimeoutExpired):
                self._proc.kill()
            self._proc = None

    def restart(self) -> None:
        if self._proc is not None:
            self._proc.kill()
            self._proc.wait()
            self._proc = None
        self._start()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        if getattr(self, "_proc", None) is not None:
            self._proc.kill()

    def _send(self, text: str) -> None:
        if self._proc is None or self._proc.poll() is not None:
            raise SolverError("solver process is not running")
        try:
            self._proc.stdin.write(text.encode() + b"\n")
        except BrokenPipeError as exc:
            raise SolverError("solver process closed its input") from exc

    def _read_line(self, deadline: float | None) -> str:
        try:
            self._proc.stdin.flush()
        except BrokenPipeError as exc:
            raise SolverError("solver process closed its input") from exc
        while b"\n" not in self._buffer:
            wait = None if deadline is None else deadline - time.monotonic()
            if wait is not None and wait <= 0:
                raise TimeoutError
            with selectors.DefaultSelector() as sel:
                sel.register(self._proc.stdout, selectors.EVENT_READ)
                if not sel.select(wait):
                    raise TimeoutError
            chunk = os.read(self._proc.stdout.fileno(), 65536)
            if not chunk:
                raise SolverError(f"solver exited (code {self._proc.poll()})")
            self._buffer += chunk
        line, _, self._buffer = self._buffer.partition(b"\n")
        return line.decode().strip()

    def _read_sexpr(self, deadline: float | None) -> str:
        text, depth = "", 0
        while True:
            line = self._read_line(deadline)
            text += " " + line
            depth += line.count("(") - line.count(")")
            if depth <= 0 and text.strip():
                return text.strip()

    # symbols and scopes

    @property
    def depth(self) -> int:
        return len(self._scopes) - 1

    @property
    def symbols(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for scope in self._scopes:
            out.update(scope)
        return out

    def declare(self, name: str, width: int) -> None:
        known = self.symbols
        if name in known:
            if known[name] != width:
                raise SmtError(f"{name!r} already declared with width {known[name]}")
            return
        self._send(f"(declare-fun {symbol(name)} () {sort(width)})")
        self._scopes[-1][name] = width

    def declare_vars(self, *exprs: Expr) -> None:
        for name, width in bv.variables(*exprs).items():
            self.declare(name, width)

    def push(self) -> None:
        self._send("(push 1)")
        self._scopes.append({})

    def pop(self) -> None:
        if self.depth == 0:
            raise SmtError("pop at depth 0")
        self._send("(pop 1)")
        self._scopes.pop()

    def reset(self) -> None:
        self._send("(reset)")
        self._scopes = [{}]
        self._preamble()

    def add(self, term: str) -> None:
        """Assert raw SMT-LIB2 boolean term text."""
        self._send(f"(assert {term})")

    def add_expr(self, expr: Expr) -> None:
        """Declare the variables of a 1-bit expression and assert it."""
        self.declare_vars(expr)
        self.add(assertion(expr))

    # solving

    def check(self, assertions: Iterable[str] = (), model: bool = True) -> CheckResult:
        for term in assertions:
            self.add(term)
        self.calls += 1
        start = time.monotonic()
        deadline = start + self.timeout_ms / 1000 * 1.5 + 5
        self._send("(check-sat)")
        try:
            while True:
                reply = self._read_line(deadline)
                if reply in (SAT, UNSAT, UNKNOWN):
                    break
                if reply.startswith("(error"):
                    raise SolverError(reply)
                if reply:
                    raise SolverError(f"unexpected solver output: {reply!r}")
        except TimeoutError:
            log.warning("solver did not answer within the hard deadline; restarting it")
            self.restart()
            return CheckResult(UNKNOWN, elapsed_ms=(time.monotonic() - start) * 1000, reason="killed")
        elapsed = (time.monotonic() - start) * 1000
        if reply == UNKNOWN:
            return CheckResult(UNKNOWN, elapsed_ms=elapsed, reason=self._reason_unknown(deadline))
        if reply == UNSAT:
            return CheckResult(UNSAT, elapsed_ms=elapsed)
        values = self.get_values(list(self.symbols)) if model else {}
        return CheckResult(SAT, values, elapsed)

    def query(self, assertions: Iterable[Expr], values: Iterable[str] = ()) -> CheckResult:
        """Check 1-bit expressions in an emptied context and read back ``values`` on SAT.

        Unlike push/pop scoping this lets the solver pick its non-incremental
        bit-vector pipeline, which is much faster on multiply-heavy queries.
        Any scoped state is discarded, so it refuses to run inside a push, and
        the context is emptied again on return.
        """
        if self.depth:
            raise SmtError("query() needs an empty assertion stack")
        self.reset()
        try:
            assertions = list(assertions)
            self.declare_vars(*assertions)
            for expr in assertions:
                self.add(assertion(expr))
            result = self.check(model=False)
            if result.sat:
                values = list(values)
                known = self.symbols
                model = self.get_values([v for v in values if v in known])
                # names the assertions never mention are unconstrained; any value will do
                result.model = {v: model.get(v, 0) for v in values}
            return result
        finally:
            # leave no base-level assertions behind for later scoped checks
            self.reset()

    def _reason_unknown(self, deadline: float) -> str:
        self._send("(get-info :reason-unknown)")
        try:
            return self._read_sexpr(deadline)
        except (TimeoutError, SolverError):
            return "unknown"

    def get_values(self, names: list[str]) -> dict[str, int]:
        if not names:
            return {}
        widths = self.symbols
        self._send(f"(get-value ({' '.join(symbol(n) for n in names)}))")
        deadline = time.monotonic() + 30
        try:
            reply = self._read_sexpr(deadline)
        except TimeoutError as exc:
            raise SolverError("timed out reading model") from exc
        if reply.startswith("(error"):
            raise SolverError(reply)
        parsed = _parse_sexpr(reply)
        if len(parsed) != 1 or not isinstance(parsed[0], list):
            raise SolverError(f"malformed get-value reply: {reply!r}")
        out: dict[str, int] = {}
        for pair in parsed[0]:
            if not isinstance(pair, list) or len(pair) != 2 or not isinstance(pair[0], str):
                raise SolverError(f"malformed get-value pair: {pair!r}")
            name = pair[0][1:-1] if pair[0].startswith("|") else pair[0]
            value = _parse_value(pair[1])
            if name in widths and value > bv.mask(widths[name]):
                raise SolverError(f"model value for {name!r} exceeds its width")
            out[name] = value
        return out


def check_sat(session: SmtSession, assertions: Iterable[str]) -> CheckResult:
    """Check ``assertions`` in a fresh scope, leaving the session as it was."""
    session.push()
    try:
        return session.check(assertions)
    finally:
        if session.depth > 0:
            session.pop()
