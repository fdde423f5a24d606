# copyright ################################# #
# This file is part of the Xgam Package.      #
# Copyright (c) Xgam developers, 2024.        #
# ########################################### #

"""
Execution contexts and kernel descriptions.

A context is either ``None``, the numpy reference path, or an ``XContext``
running compiled kernels. Kernels are declared with ``Kernel`` and ``Arg``
and called through ``context.kernels.<name>(**named_args)``.
"""

import logging
import os
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Type, Union

log = logging.getLogger(__name__)

SourceType = Union[str, Path, "io.TextIOBase"]

NUMPY_CONTEXT_NAME = "numpy"


def read_sources(sources: Sequence[SourceType]) -> str:
    """Concatenate source strings, files and open file objects."""
    chunks = []
    for ss in sources:
        if hasattr(ss, "read"):
            chunks.append(ss.read())
        elif isinstance(ss, Path):
            chunks.append(ss.read_text())
        else:
            chunks.append(ss)
    return "\n".join(chunks)


class KernelDict(dict):
    """
    Compiled kernels keyed by name.

    Attribute access returns a KernelDispatcher, so that kernels can be
    called as ``context.kernels.gam_edge_geometry(n_edges=..., ...)``.
    """

    def __getattr__(self, attr):
        if attr.startswith("__"):
            raise AttributeError(attr)
        return KernelDispatcher(attr, self)


class KernelDispatcher:
    def __init__(self, kernel_name, kernels):
        self._kernels = kernels
        self._name = kernel_name

    def __call__(self, *args, **kwargs):
        if args:
            raise ValueError(
                f"Kernel `{self._name}` only takes named arguments"
            )
        if self._name not in self._kernels:
            raise KeyError(f"Kernel `{self._name}` has not been built")
        return self._kernels[self._name](**kwargs)


class ModuleNotAvailable:
    """Stand-in for an optional module that failed to import."""

    def __init__(self, message="Module not available"):
        self.message = message

    def __getattr__(self, attr):
        raise NameError(self.message)


class XContext(ABC):
    def __init__(self):
        self._kernels = KernelDict()

    def __str__(self):
        return type(self).__name__

    @property
    def kernels(self):
        """Kernels built on this context, see ``KernelDict``."""
        return self._kernels

    def add_kernels(
        self,
        kernels: Dict[str, "Kernel"],
        sources: Optional[list] = None,
        save_source_as: Optional[str] = None,
        compile: bool = True,  # noqa
    ):
        """
        Build ``kernels`` from ``sources`` and register them on the context.

        Args:
            kernels: Kernel descriptions, ``{name: xg.Kernel(...)}``.
            sources: Source strings, Path objects or open files, concatenated
                before compilation. They must define every kernel named in
                ``kernels``.
            save_source_as: File name for the specialized source.
            compile: If False, kernels are described but cannot be called.
        """
        built = self.build_kernels(
            kernel_descriptions=kernels or {},
            sources=sources or [],
            save_source_as=save_source_as,
            compile=compile,
        )
        self.kernels.update(built)

    @abstractmethod
    def build_kernels(
        self,
        kernel_descriptions: Dict[str, "Kernel"],
        sources: list,
        save_source_as: Optional[str],
        compile: bool,
    ) -> Dict[str, object]:
        pass

    @property
    @abstractmethod
    def n_threads(self):
        "number of threads used by kernels, 0 meaning chosen by runtime"


available: List[Type[XContext]] = []


class Arg:
    """One kernel argument: a scalar type, passed by value or as an array."""

    def __init__(self, atype, pointer=False, name=None, const=False):
        self.atype = atype
        self.pointer = pointer
        self.name = name
        self.const = const

    def get_c_type(self):
        ctype = self.atype._c_type
        if self.pointer:
            ctype = ("const " if self.const else "") + ctype + "*"
        return ctype


class Kernel:
    """C signature of a kernel.

    ``n_threads`` names the argument holding the size of the vectorized loop,
    1 for kernels that are serial by construction.
    """

    def __init__(self, args, c_name=None, ret=None, n_threads=1):
        names = [arg.name for arg in args]
        if None in names or len(set(names)) != len(names):
            raise ValueError("Kernel arguments need distinct names")
        if isinstance(n_threads, str) and n_threads not in names:
            raise ValueError(f"`{n_threads}` is not an argument of the kernel")
        self.c_name = c_name
        self.args = args
        self.ret = ret
        self.n_threads = n_threads
        self.pyname = None

    @property
    def arg_names(self):
        return [arg.name for arg in self.args]


def get_context_from_string(ctxstr):
    """
    Build a context from its string form.

    Examples:
       None or "numpy"   -> None (numpy reference path)
       "ContextCpu"      -> ContextCpu()  (serial)
       "ContextCpu:4"    -> ContextCpu(omp_num_threads=4)
       "ContextCpu:auto" -> ContextCpu(omp_num_threads="auto")
    """
    from .context_cpu import ContextCpu

    if ctxstr is None or ctxstr == NUMPY_CONTEXT_NAME:
        return None

    ctxtype, _, option = ctxstr.partition(":")
    if ctxtype != "ContextCpu":
        raise ValueError(f"Cannot create context from `{ctxstr}`")
    if not option:
        return ContextCpu()
    if option == "auto":
        return ContextCpu(omp_num_threads="auto")
    return ContextCpu(omp_num_threads=int(option))


def context_name(context):
    if context is None:
        return NUMPY_CONTEXT_NAME
    return str(context)


def get_test_contexts():
    """
    Context strings exercised by the test-suite. The numpy reference path is
    always included; compiled contexts follow XGAM_TEST_CONTEXTS
    (``"all"`` or a ``;`` separated list of context strings).
    """
    from .context_cpu import ContextCpu

    ctxstr = os.environ.get("XGAM_TEST_CONTEXTS")
    yield NUMPY_CONTEXT_NAME
    if ctxstr is None:
        if ContextCpu in available:
            yield "ContextCpu"
    elif ctxstr == "all":
        if ContextCpu in available:
            yield "ContextCpu"
            yield "ContextCpu:auto"
    else:
        for cc in ctxstr.split(";"):
            if cc and cc != NUMPY_CONTEXT_NAME:
                yield cc


def get_user_context():
    """
    Context named by the environment variable XGAM_USER_CONTEXT, the numpy
    reference path when unset.
    """
    return get_context_from_string(os.environ.get("XGAM_USER_CONTEXT"))
