"""
Toy instruction set: program representation, text format and validation.

Every static instruction carries a ``site_id``; site ids are assigned in
textual order starting at 0 and are the anchors fault injection targets.
The bit-exact grammar lives in IR_FORMAT.md.
"""

import re
import struct
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

from .errors import IRParseError
from .utils import MASK64

REG_COUNT = 64
WORD_BITS = 64

# A Word is a 64-bit unsigned bit pattern held in a Python int.
Word = int

ARITHMETIC = "arithmetic"
LOAD_STORE = "load_store"
CONTROL = "control"
THREAD_PRIMITIVE = "thread_primitive"
IO = "io"

INSTRUCTION_CLASSES: Tuple[str, ...] = (
    ARITHMETIC, LOAD_STORE, CONTROL, THREAD_PRIMITIVE, IO,
)

_OPCODE_CLASSES: Dict[str, str] = {
    "add": ARITHMETIC, "sub": ARITHMETIC, "mul": ARITHMETIC,
    "div": ARITHMETIC, "mod": ARITHMETIC, "and": ARITHMETIC,
    "or": ARITHMETIC, "xor": ARITHMETIC, "shl": ARITHMETIC,
    "shr": ARITHMETIC, "cmp": ARITHMETIC, "mov": ARITHMETIC,
    "movi": ARITHMETIC,
    "fadd": ARITHMETIC, "fsub": ARITHMETIC, "fmul": ARITHMETIC,
    "fdiv": ARITHMETIC,
    "load": LOAD_STORE, "store": LOAD_STORE,
    "br": CONTROL, "brz": CONTROL, "brnz": CONTROL, "call": CONTROL,
    "ret": CONTROL, "halt": CONTROL,
    "spawn": THREAD_PRIMITIVE, "join": THREAD_PRIMITIVE,
    "lock": THREAD_PRIMITIVE, "unlock": THREAD_PRIMITIVE,
    "print": IO,
}

OPCODES: Tuple[str, ...] = tuple(_OPCODE_CLASSES)

# Operand kinds: R register, RI register or immediate, I immediate,
# L label, F function name.
_BINARY = (("R", "R", "RI"),)
_SIGNATURES: Dict[str, Tuple[Tuple[str, ...], ...]] = {
    **{op: _BINARY for op in (
        "add", "sub", "mul", "div", "mod", "and", "or", "xor", "shl",
        "shr", "cmp", "fadd", "fsub", "fmul", "fdiv")},
    "mov": (("R", "R"),),
    "movi": (("R", "I"),),
    "load": (("R", "R", "I"),),
    "store": (("R", "R", "I"),),
    "br": (("L",),),
    "brz": (("R", "L"),),
    "brnz": (("R", "L"),),
    "call": (("F",),),
    "ret": ((),),
    "spawn": (("R", "F", "R"),),
    "join": (("R", "R"),),
    "lock": (("RI",),),
    "unlock": (("RI",),),
    "print": (("R",), ("R", "I")),
    "halt": ((),),
}

REGISTER_DEST_OPCODES: FrozenSet[str] = frozenset(
    op for op, cls in _OPCODE_CLASSES.items() if cls == ARITHMETIC
) | {"load", "spawn", "join"}
MEMORY_DEST_OPCODES: FrozenSet[str] = frozenset({"store"})
TERMINATORS: FrozenSet[str] = frozenset({"br", "ret", "halt"})
PRINT_RADIXES = (10, 16)

_DOUBLE = struct.Struct("<d")
_UINT64 = struct.Struct("<Q")


def classify_opcode(op: str) -> str:
    """Instruction class of an opcode (total over OPCODES)."""
    try:
        return _OPCODE_CLASSES[op]
    except KeyError:
        raise ValueError(f"unknown opcode '{op}'") from None


def has_destination(op: str) -> bool:
    """True when executing ``op`` writes a register or memory word."""
    return op in REGISTER_DEST_OPCODES or op in MEMORY_DEST_OPCODES


def to_signed(value: Word) -> int:
    """Two's-complement reading of a word."""
    return value - (1 << 64) if value & (1 << 63) else value


def float_to_bits(value: float) -> Word:
    return _UINT64.unpack(_DOUBLE.pack(value))[0]


def bits_to_float(value: Word) -> float:
    return _DOUBLE.unpack(_UINT64.pack(value))[0]


@dataclass(frozen=True)
class Reg:
    index: int

    def __str__(self) -> str:
        return f"r{self.index}"


@dataclass(frozen=True)
class Imm:
    value: Word

    def __str__(self) -> str:
        return str(to_signed(self.value))


@dataclass(frozen=True)
class GlobalRef:
    """Immediate resolved to the base address of a global."""
    name: str

    def __str__(self) -> str:
        return f"@{self.name}"


@dataclass(frozen=True)
class LabelRef:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class FuncRef:
    name: str

    def __str__(self) -> str:
        return self.name


Operand = Union[Reg, Imm, GlobalRef, LabelRef, FuncRef]


@dataclass(frozen=True)
class Instruction:
    """One static instruction; its site_id is the fault-site anchor."""
    site_id: int
    opcode: str
    operands: Tuple[Operand, ...] = ()

    @property
    def instr_class(self) -> str:
        return classify_opcode(self.opcode)

    @property
    def dest_register(self) -> Optional[int]:
        if self.opcode in REGISTER_DEST_OPCODES:
            dest = self.operands[0]
            assert isinstance(dest, Reg)
            return dest.index
        return None

    @property
    def writes_memory(self) -> bool:
        return self.opcode in MEMORY_DEST_OPCODES

    @property
    def has_destination(self) -> bool:
        return has_destination(self.opcode)

    def __str__(self) -> str:
        if not self.operands:
            return self.opcode
        return f"{self.opcode} " + ", ".join(str(o) for o in self.operands)


@dataclass(frozen=True)
class Function:
    name: str
    params: int
    body: Tuple[Instruction, ...]
    labels: Dict[str, int] = field(default_factory=dict, hash=False)


@dataclass(frozen=True)
class GlobalDecl:
    name: str
    size: int
    init: Tuple[Word, ...] = ()


@dataclass(frozen=True)
class Program:
    """A validated program; immutable and safe to share across workers."""
    functions: Tuple[Function, ...]
    entry: str
    globals: Tuple[GlobalDecl, ...] = ()
    _functions_by_name: Dict[str, Function] = field(
        init=False, repr=False, compare=False, hash=False)
    _sites: Tuple[Instruction, ...] = field(
        init=False, repr=False, compare=False, hash=False)
    _layout: Dict[str, Tuple[int, int]] = field(
        init=False, repr=False, compare=False, hash=False)

    def __post_init__(self) -> None:
        by_name = {fn.name: fn for fn in self.functions}
        if self.entry not in by_name:
            raise ValueError(f"entry function '{self.entry}' is not defined")
        sites = sorted(
            (ins for fn in self.functions for ins in fn.body),
            key=lambda ins: ins.site_id,
        )
        if [ins.site_id for ins in sites] != list(range(len(sites))):
            raise ValueError("site ids must be exactly 0..N-1")
        layout: Dict[str, Tuple[int, int]] = {}
        base = 0
        for decl in self.globals:
            layout[decl.name] = (base, decl.size)
            base += decl.size
        object.__setattr__(self, "_functions_by_name", by_name)
        object.__setattr__(self, "_sites", tuple(sites))
        object.__setattr__(self, "_layout", layout)

    def function(self, name: str) -> Function:
        return self._functions_by_name[name]

    def instruction(self, site_id: int) -> Instruction:
        return self._sites[site_id]

    @property
    def instructions(self) -> Tuple[Instruction, ...]:
        """All static instructions ordered by site_id."""
        return self._sites

    @property
    def static_count(self) -> int:
        return len(self._sites)

    def global_base(self, name: str) -> int:
        return self._layout[name][0]

    def global_layout(self) -> Dict[str, Tuple[int, int]]:
        """Global name -> (base address, size in words)."""
        return dict(self._layout)

    @property
    def global_words(self) -> int:
        return sum(decl.size for decl in self.globals)

    def global_at(self, address: int) -> Optional[str]:
        for name, (base, size) in self._layout.items():
            if base <= address < base + size:
                return name
        return None

    def function_of(self, site_id: int) -> str:
        for fn in self.functions:
            if fn.body and fn.body[0].site_id <= site_id <= fn.body[-1].site_id:
                return fn.name
        raise KeyError(site_id)


# ---------------------------------------------------------------------------
# Parsing

_IDENT = r"[A-Za-z_][A-Za-z0-9_.]*"
_IDENT_RE = re.compile(rf"^{_IDENT}$")
_LABEL_RE = re.compile(rf"^({_IDENT}):$")
_REG_RE = re.compile(r"^r(\d+)$")
_KEYVAL_RE = re.compile(r"^([a-z]+)=(.*)$")


@dataclass
class _PendingFunction:
    name: str
    params: int
    line: int
    body: List[Tuple[int, str, List[str], int]] = field(default_factory=list)
    labels: Dict[str, int] = field(default_factory=dict)
    label_lines: Dict[str, int] = field(default_factory=dict)


def _parse_immediate(token: str, line: int, allow_global: bool = True) -> Union[Imm, GlobalRef]:
    if token.startswith("@"):
        name = token[1:]
        if not allow_global or not _IDENT_RE.match(name):
            raise IRParseError(line, f"invalid immediate '{token}'")
        return GlobalRef(name)
    try:
        value = int(token, 0)
    except ValueError:
        try:
            return Imm(float_to_bits(float(token)))
        except ValueError:
            raise IRParseError(line, f"invalid immediate '{token}'") from None
    if not -(1 << 63) <= value <= MASK64:
        raise IRParseError(line, f"immediate '{token}' does not fit in 64 bits")
    return Imm(value & MASK64)


def _parse_register(token: str, line: int) -> Reg:
    match = _REG_RE.match(token)
    if not match:
        raise IRParseError(line, f"expected register, got '{token}'")
    index = int(match.group(1))
    if index >= REG_COUNT:
        raise IRParseError(
            line, f"register '{token}' out of range (r0..r{REG_COUNT - 1})")
    return Reg(index)


def _parse_operand(kind: str, token: str, line: int) -> Operand:
    if kind == "R":
        return _parse_register(token, line)
    if kind == "RI":
        if _REG_RE.match(token):
            return _parse_register(token, line)
        return _parse_immediate(token, line)
    if kind == "I":
        return _parse_immediate(token, line)
    if not _IDENT_RE.match(token):
        raise IRParseError(line, f"invalid name '{token}'")
    return LabelRef(token) if kind == "L" else FuncRef(token)


def _parse_function_header(rest: List[str], line: int) -> Tuple[str, int]:
    if not rest or not _IDENT_RE.match(rest[0]):
        raise IRParseError(line, "expected 'fn NAME [params=N]'")
    params = 0
    for token in rest[1:]:
        match = _KEYVAL_RE.match(token)
        if not match or match.group(1) != "params" or not match.group(2).isdigit():
            raise IRParseError(line, f"unexpected '{token}' in function header")
        params = int(match.group(2))
    return rest[0], params


def _parse_global(rest: List[str], line: int) -> GlobalDecl:
    if not rest or not _IDENT_RE.match(rest[0]):
        raise IRParseError(line, "expected 'global NAME words=N [init=...]'")
    size: Optional[int] = None
    init: Tuple[Word, ...] = ()
    for token in rest[1:]:
        match = _KEYVAL_RE.match(token)
        if not match:
            raise IRParseError(line, f"unexpected '{token}' in global declaration")
        key, value = match.groups()
        if key == "words":
            if not value.isdigit() or int(value) < 1:
                raise IRParseError(line, f"invalid word count '{value}'")
            size = int(value)
        elif key == "init":
            values = [v.strip() for v in value.split(",") if v.strip()]
            init = tuple(
                _parse_immediate(v, line, allow_global=False).value  # type: ignore[union-attr]
                for v in values
            )
        else:
            raise IRParseError(line, f"unknown global attribute '{key}'")
    if size is None:
        raise IRParseError(line, f"global '{rest[0]}' is missing words=N")
    if len(init) > size:
        raise IRParseError(
            line, f"global '{rest[0]}' has {len(init)} initial values for {size} words")
    return GlobalDecl(rest[0], size, init)


def parse_program(text: str) -> Program:
    """Parse and validate IR source text."""
    pending: List[_PendingFunction] = []
    globals_: List[GlobalDecl] = []
    global_lines: Dict[str, int] = {}
    entry: Optional[str] = None
    current: Optional[_PendingFunction] = None
    site = 0

    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].strip()
        if not stripped:
            continue
        label = _LABEL_RE.match(stripped)
        if label:
            if current is None:
                raise IRParseError(lineno, "label outside of a function")
            name = label.group(1)
            if name in current.labels:
                raise IRParseError(lineno, f"duplicate label '{name}'")
            current.labels[name] = len(current.body)
            current.label_lines[name] = lineno
            continue
        words = stripped.split()
        head = words[0]
        if head == "fn":
            name, params = _parse_function_header(words[1:], lineno)
            if any(fn.name == name for fn in pending):
                raise IRParseError(lineno, f"duplicate function '{name}'")
            current = _PendingFunction(name, params, lineno)
            pending.append(current)
            continue
        if head == "global":
            decl = _parse_global(words[1:], lineno)
            if decl.name in global_lines:
                raise IRParseError(lineno, f"duplicate global '{decl.name}'")
            global_lines[decl.name] = lineno
            globals_.append(decl)
            continue
        if head == "entry":
            if len(words) != 2 or not _IDENT_RE.match(words[1]):
                raise IRParseError(lineno, "expected 'entry NAME'")
            entry = words[1]
            continue
        if head not in _OPCODE_CLASSES:
            raise IRParseError(lineno, f"unknown opcode '{head}'")
        if current is None:
            raise IRParseError(lineno, "instruction outside of a function")
        rest = stripped[len(head):].strip()
        tokens = [t.strip() for t in rest.split(",")] if rest else []
        if any(not t for t in tokens):
            raise IRParseError(lineno, "empty operand")
        current.body.append((site, head, tokens, lineno))
        site += 1

    if not pending:
        raise IRParseError(1, "program defines no functions")

    function_names = {fn.name for fn in pending}
    functions: List[Function] = []
    for fn in pending:
        if not fn.body:
            raise IRParseError(fn.line, f"function '{fn.name}' has an empty body")
        for name, index in fn.labels.items():
            if index >= len(fn.body):
                raise IRParseError(
                    fn.label_lines[name], f"label '{name}' does not precede an instruction")
        body: List[Instruction] = []
        for site_id, opcode, tokens, lineno in fn.body:
            signature = next(
                (sig for sig in _SIGNATURES[opcode] if len(sig) == len(tokens)), None)
            if signature is None:
                expected = " or ".join(str(len(s)) for s in _SIGNATURES[opcode])
                raise IRParseError(
                    lineno, f"'{opcode}' expects {expected} operands, got {len(tokens)}")
            operands = tuple(
                _parse_operand(kind, token, lineno) for kind, token in zip(signature, tokens))
            for operand in operands:
                if isinstance(operand, LabelRef) and operand.name not in fn.labels:
                    raise IRParseError(lineno, f"undefined label '{operand.name}'")
                if isinstance(operand, FuncRef) and operand.name not in function_names:
                    raise IRParseError(lineno, f"undefined function '{operand.name}'")
                if isinstance(operand, GlobalRef) and operand.name not in global_lines:
                    raise IRParseError(lineno, f"undefined global '{operand.name}'")
            if opcode == "print" and len(operands) == 2:
                radix = operands[1]
                if not isinstance(radix, Imm) or radix.value not in PRINT_RADIXES:
                    raise IRParseError(lineno, "print radix must be 10 or 16")
            body.append(Instruction(site_id, opcode, operands))
        if body[-1].opcode not in TERMINATORS:
            raise IRParseError(
                fn.body[-1][3], f"function '{fn.name}' may fall off its end")
        functions.append(Function(fn.name, fn.params, tuple(body), dict(fn.labels)))

    if entry is None:
        entry = _default_entry(functions)
    elif entry not in function_names:
        raise IRParseError(1, f"entry function '{entry}' is not defined")
    return Program(tuple(functions), entry, tuple(globals_))


def _default_entry(functions: Sequence[Function]) -> str:
    names = [fn.name for fn in functions]
    return "main" if "main" in names else names[0]


def print_program(program: Program) -> str:
    """Normalized IR text; parse_program(print_program(p)) == p."""
    lines: List[str] = []
    if program.entry != _default_entry(program.functions):
        lines.append(f"entry {program.entry}")
    for decl in program.globals:
        text = f"global {decl.name} words={decl.size}"
        if decl.init:
            text += " init=" + ",".join(str(to_signed(v)) for v in decl.init)
        lines.append(text)
    if lines:
        lines.append("")
    for position, fn in enumerate(program.functions):
        if position:
            lines.append("")
        header = f"fn {fn.name}"
        if fn.params:
            header += f" params={fn.params}"
        lines.append(header)
        labels_at: Dict[int, List[str]] = defaultdict(list)
        for name, index in fn.labels.items():
            labels_at[index].append(name)
        for index, ins in enumerate(fn.body):
            for name in labels_at.get(index, ()):
                lines.append(f"{name}:")
            lines.append(f"    {ins}")
    return "\n".join(lines) + "\n"
