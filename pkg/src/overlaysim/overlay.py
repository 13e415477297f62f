"""Overlay containers: IP registration, command interfaces, manifests, enqueue.

An overlay bundles a set of IP kernels, one command queue per kernel, and
(when any kernel needs it) a feature buffer.  Building an overlay persists a
JSON manifest that stands in for a compiled bitstream; loading a manifest
rebinds kernels by name from the registry below.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels
from .errors import ConfigurationError, InvocationError, ParseError
from .kernels import ConvControlFlags, FeatureBuffer, GemmCoefficients
from .runtime import TaskInstance
from .tensors import READ, READ_WRITE, WRITE, AccessSet, BlockView, access_set

PARAM_KINDS = ("view", "scalar", "flag")


@dataclass(frozen=True)
class IpDescriptor:
    """A kernel bound to a parameter signature, with access and work estimators.

    run executes the kernel on the bound arguments and returns a
    floating-point-operation estimate used for virtual trace times.
    access_sets derives the element footprints a task with these arguments
    will touch, including the feature buffer when flags route I/O there.
    """

    name: str
    signature: tuple[str, ...]
    run: Callable
    access_sets: Callable
    uses_feature_buffer: bool = False

    def __post_init__(self):
        for kind in self.signature:
            if kind not in PARAM_KINDS:
                raise ConfigurationError(f"{self.name}: unknown parameter kind {kind!r}")


@dataclass(frozen=True)
class CommandInterface:
    queue_no: int
    ip: IpDescriptor


def command(ip: IpDescriptor, queue_no: int,
            signature: tuple[str, ...] | None = None) -> CommandInterface:
    """Bind an IP to a command queue number.

    An explicit signature, when given, must match the IP's own; queue number
    collisions are caught at overlay construction.
    """
    if queue_no < 0:
        raise ConfigurationError(f"queue number must be >= 0, got {queue_no}")
    if signature is not None and tuple(signature) != ip.signature:
        raise ConfigurationError(
            f"{ip.name}: declared signature {tuple(signature)} does not match "
            f"kernel signature {ip.signature}"
        )
    return CommandInterface(queue_no, ip)


class Overlay:
    """Container for command interfaces plus their runtime queues."""

    def __init__(self, name: str, interfaces):
        interfaces = list(interfaces)
        if not interfaces:
            raise ConfigurationError("an overlay needs at least one interface")
        queue_nos = sorted(ci.queue_no for ci in interfaces)
        if len(set(queue_nos)) != len(queue_nos):
            raise ConfigurationError(f"duplicate queue numbers: {queue_nos}")
        if queue_nos != list(range(len(queue_nos))):
            raise ConfigurationError(
                f"queue numbers must be contiguous from 0, got {queue_nos}"
            )
        self.name = name
        self.interfaces = {ci.queue_no: ci for ci in interfaces}
        self.queues: dict[int, list[TaskInstance]] = {q: [] for q in self.interfaces}
        needs_fb = any(ci.ip.uses_feature_buffer for ci in interfaces)
        self.feature_buffer: FeatureBuffer | None = FeatureBuffer() if needs_fb else None
        self._task_ids = itertools.count()

    def interface(self, queue_no: int) -> CommandInterface:
        try:
            return self.interfaces[queue_no]
        except KeyError:
            raise InvocationError(
                f"overlay {self.name!r} has no queue {queue_no}"
            ) from None

    def enqueue(self, queue_no: int, params, iteration: int,
                kind: str | None = None) -> TaskInstance:
        """Append one command to a queue; returns the task for rule declaration.

        Nothing executes here: the task graph and scheduler decide ordering
        later.  Parameters are checked against the interface signature now so
        a bad call fails at enqueue time.
        """
        iface = self.interface(queue_no)
        params = tuple(params)
        sig = iface.ip.signature
        if len(params) != len(sig):
            raise InvocationError(
                f"{iface.ip.name}: expected {len(sig)} parameters, got {len(params)}"
            )
        for pos, (param, expect) in enumerate(zip(params, sig)):
            if expect == "view" and not isinstance(param, BlockView):
                raise InvocationError(
                    f"{iface.ip.name}: parameter {pos} must be a view, got {type(param).__name__}"
                )
            if expect == "flag" and not isinstance(param, bool):
                raise InvocationError(
                    f"{iface.ip.name}: parameter {pos} must be a flag, got {param!r}"
                )
            if expect == "scalar" and (isinstance(param, bool)
                                       or not isinstance(param, (int, float))):
                raise InvocationError(
                    f"{iface.ip.name}: parameter {pos} must be a scalar, got {param!r}"
                )
        task = TaskInstance(
            id=next(self._task_ids),
            kind=kind if kind is not None else iface.ip.name,
            queue_no=queue_no,
            iteration=iteration,
            args=params,
            access_sets=tuple(iface.ip.access_sets(params, self.feature_buffer)),
        )
        self.queues[queue_no].append(task)
        return task

    def manifest(self) -> dict:
        return {
            "name": self.name,
            "ips": [
                {"name": ci.ip.name, "queue": q, "signature": list(ci.ip.signature)}
                for q, ci in sorted(self.interfaces.items())
            ],
        }

    def save_manifest(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.manifest(), fh, indent=2)
            fh.write("\n")


def build_overlay(name: str, interfaces) -> Overlay:
    """Materialize the runtime object for a set of command interfaces."""
    return Overlay(name, interfaces)


def load_overlay(path) -> Overlay:
    """Rebuild an overlay from a manifest, rebinding kernels by name.

    Loading is idempotent: every load yields an equivalent overlay with the
    same queue map and empty queues.
    """
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON") from exc
    if not isinstance(doc, dict) or "name" not in doc or "ips" not in doc:
        raise ParseError(f"{path}: manifest must have 'name' and 'ips'")
    interfaces = []
    for entry in doc["ips"]:
        if not isinstance(entry, dict) or not {"name", "queue", "signature"} <= set(entry):
            raise ParseError(f"{path}: malformed ip entry {entry!r}")
        ip = IP_REGISTRY.get(entry["name"])
        if ip is None:
            raise ConfigurationError(
                f"{path}: no registered kernel named {entry['name']!r}"
            )
        if tuple(entry["signature"]) != ip.signature:
            raise ConfigurationError(
                f"{path}: manifest signature {entry['signature']} does not match "
                f"kernel {entry['name']}"
            )
        interfaces.append(command(ip, int(entry["queue"])))
    return build_overlay(doc["name"], interfaces)


# --- kernel adapters --------------------------------------------------------
#
# Each adapter unpacks a task's bound arguments, invokes the kernel, and
# returns a flop estimate for virtual trace time.  Access-set derivations
# mirror exactly what the kernel touches; dummy view arguments are skipped
# whenever a flag routes that side through the feature buffer.

def _fb_access(fb: FeatureBuffer, mode: str) -> AccessSet:
    # the slot is modeled as a one-cell resource: any two uses with a write conflict
    return AccessSet(fb.resource_id, ((0, 1),), mode)


def _run_lu(args, fb) -> int:
    (block,) = args
    kernels.lu_factor_block(block)
    m = block.shape[0]
    return (2 * m ** 3) // 3


def _access_lu(args, fb):
    (block,) = args
    return (access_set(block, READ_WRITE),)


def _split_row_panel(panel: BlockView):
    (r0, r1), (c0, c1) = panel.elem_ranges
    m = r1 - r0
    head = ((r0, r1), (c0, c0 + m))
    tail = ((r0, r1), (c0 + m, c1))
    return head, tail


def _run_row_panel(args, fb) -> int:
    (panel,) = args
    kernels.transform_row_panel(panel)
    m, width = panel.shape
    return m * m * (width - m)


def _access_row_panel(args, fb):
    (panel,) = args
    head, tail = _split_row_panel(panel)
    return (
        AccessSet(panel.buffer.id, head, READ),
        AccessSet(panel.buffer.id, tail, READ_WRITE),
    )


def _split_column_panel(panel: BlockView):
    (r0, r1), (c0, c1) = panel.elem_ranges
    m = c1 - c0
    head = ((r0, r0 + m), (c0, c1))
    tail = ((r0 + m, r1), (c0, c1))
    return head, tail


def _run_column_panel(args, fb) -> int:
    (panel,) = args
    kernels.transform_column_panel(panel)
    height, m = panel.shape
    return m * m * (height - m)


def _access_column_panel(args, fb):
    (panel,) = args
    head, tail = _split_column_panel(panel)
    return (
        AccessSet(panel.buffer.id, head, READ),
        AccessSet(panel.buffer.id, tail, READ_WRITE),
    )


def _run_gemm(args, fb) -> int:
    c, a, b, alpha, beta, gamma = args
    kernels.gemm(c, a, b, GemmCoefficients(alpha, beta, gamma))
    return 2 * a.shape[0] * a.shape[1] * b.shape[1]


def _access_gemm(args, fb):
    c, a, b, _alpha, _beta, _gamma = args
    return (
        access_set(c, READ_WRITE),
        access_set(a, READ),
        access_set(b, READ),
    )


def _run_convolution(args, fb) -> int:
    x, y, w, read_fb, store_fb, with_relu, is_fc = args
    flags = ConvControlFlags(read_fb, store_fb, with_relu, is_fc)
    if read_fb and fb is not None and fb.valid:
        in_shape = fb.slot.shape
    else:
        in_shape = x.shape
    kernels.convolution(x, y, w, flags, fb)
    weight_work = int(np.prod(w.shape))
    if is_fc:
        return 2 * weight_work
    return 2 * in_shape[0] * in_shape[1] * weight_work


def _access_convolution(args, fb):
    x, y, w, read_fb, store_fb, _with_relu, _is_fc = args
    sets = []
    if read_fb:
        sets.append(_fb_access(fb, READ))
    else:
        sets.append(access_set(x, READ))
    sets.append(access_set(w, READ))
    if store_fb:
        sets.append(_fb_access(fb, WRITE))
    else:
        sets.append(access_set(y, WRITE))
    return tuple(sets)


def _run_maxpool(args, fb) -> int:
    y, store_fb = args
    if fb is not None and fb.valid:
        work = int(np.prod(fb.slot.shape))
    else:
        work = 0
    kernels.maxpool(y, store_fb, fb)
    return work


def _access_maxpool(args, fb):
    y, store_fb = args
    if store_fb:
        return (_fb_access(fb, READ_WRITE),)
    return (_fb_access(fb, READ), access_set(y, WRITE))


IP_REGISTRY: dict[str, IpDescriptor] = {
    "LU": IpDescriptor("LU", ("view",), _run_lu, _access_lu),
    "TransformRowPanel": IpDescriptor(
        "TransformRowPanel", ("view",), _run_row_panel, _access_row_panel),
    "TransformColumnPanel": IpDescriptor(
        "TransformColumnPanel", ("view",), _run_column_panel, _access_column_panel),
    "GEMM": IpDescriptor(
        "GEMM", ("view", "view", "view", "scalar", "scalar", "scalar"),
        _run_gemm, _access_gemm),
    "Convolution": IpDescriptor(
        "Convolution", ("view", "view", "view", "flag", "flag", "flag", "flag"),
        _run_convolution, _access_convolution, uses_feature_buffer=True),
    "Maxpool": IpDescriptor(
        "Maxpool", ("view", "flag"), _run_maxpool, _access_maxpool,
        uses_feature_buffer=True),
}
