# copyright ################################# #
# This file is part of the Xgam Package.      #
# Copyright (c) Xgam developers, 2024.        #
# ########################################### #

import importlib.util
import logging
import os
import sysconfig
import uuid
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .context import (
    Kernel,
    KernelDict,
    ModuleNotAvailable,
    XContext,
    available,
    read_sources,
)
from .general import _print
from .specialize_source import specialize_source

# when set, only kernels_from_file can provide kernels
_forbid_compile = False

log = logging.getLogger(__name__)

try:
    import cffi

    _enabled = True
except ImportError:
    log.info("cffi is not installed, ContextCpu will not be available")
    cffi = ModuleNotAvailable(
        message="cffi is not installed, ContextCpu is not available"
    )
    _enabled = False

# -std=c99 keeps floating point contraction off, so that compiled distances
# round exactly like the numpy ones
_BASE_COMPILE_ARGS = ("-std=c99",)
DEFAULT_COMPILE_ARGS = ("-O3", "-Wno-unused-function")
DEFAULT_LINK_ARGS = ("-O3",)

_HEADERS = ("#include <stdint.h>", "#include <math.h>")
_OPENMP_DECLARATIONS = (
    "void omp_set_num_threads(int);",
    "int omp_get_max_threads();",
)


def kernel_signature(pyname, kernel):
    """cffi declaration of ``kernel``, named ``pyname`` unless it has a
    ``c_name``."""
    rettype = "void" if kernel.ret is None else kernel.ret.get_c_type()
    args = ", ".join(arg.get_c_type() for arg in kernel.args)
    return f"{rettype} {kernel.c_name or pyname}({args});"


def _so_path(module_name, containing_dir=".") -> Path:
    return Path(containing_dir) / (
        module_name + sysconfig.get_config_var("EXT_SUFFIX")
    )


class ContextCpu(XContext):
    """
    Compiles kernels with cffi and runs them on the CPU, serially or with
    OpenMP.

    ``omp_num_threads=0`` gives serial kernels, the mode used by the
    benchmarks; an integer or ``"auto"`` compiles them with OpenMP.
    """

    _cffi_verbose = False
    _compile_kernels_info = True

    def __init__(self, omp_num_threads=0):
        super().__init__()
        if omp_num_threads != "auto" and int(omp_num_threads) < 0:
            raise ValueError("omp_num_threads must be >= 0 or 'auto'")
        self.omp_num_threads = omp_num_threads

    def __str__(self):
        if not self.openmp_enabled:
            return super().__str__()
        return f"{type(self).__name__}:{self.omp_num_threads}"

    @property
    def openmp_enabled(self):
        return self.omp_num_threads != 0

    @property
    def n_threads(self):
        if not self.openmp_enabled:
            return 1
        if self.omp_num_threads == "auto":
            return 0
        return int(self.omp_num_threads)

    @property
    def specialize_for(self):
        return "cpu_openmp" if self.openmp_enabled else "cpu_serial"

    def prepare_source(self, sources) -> Tuple[str, str]:
        """Concatenated source with the C headers, raw and specialized."""
        headers = list(_HEADERS)
        if self.openmp_enabled:
            headers.insert(0, "#include <omp.h>")
        source = read_sources(headers + list(sources))
        return source, specialize_source(source, self.specialize_for)

    def build_kernels(
        self,
        kernel_descriptions: Dict[str, Kernel],
        sources=None,
        save_source_as: Optional[str] = None,
        compile=True,  # noqa
        module_name: Optional[str] = None,
        containing_dir=".",
        extra_compile_args: Sequence[str] = DEFAULT_COMPILE_ARGS,
        extra_link_args: Sequence[str] = DEFAULT_LINK_ARGS,
    ) -> Dict[str, "KernelCpu"]:
        """
        Compile ``sources`` and wrap the kernels of ``kernel_descriptions``.

        Without ``module_name`` the shared object gets a random name and is
        deleted once loaded; a named module stays in ``containing_dir`` and
        can be loaded again with ``kernels_from_file``.
        """
        source, specialized_source = self.prepare_source(sources or [])

        if save_source_as is not None:
            Path(containing_dir).mkdir(parents=True, exist_ok=True)
            (Path(containing_dir) / save_source_as).write_text(
                specialized_source
            )

        if compile:
            keep_so = module_name is not None
            module_name = module_name or uuid.uuid4().hex
            so_file = self.compile_kernels(
                module_name,
                kernel_descriptions,
                specialized_source,
                containing_dir=containing_dir,
                extra_compile_args=extra_compile_args,
                extra_link_args=extra_link_args,
                keep=(save_source_as,),
            )
            try:
                kernels = self.kernels_from_file(
                    module_name, kernel_descriptions, containing_dir
                )
            finally:
                # windows keeps loaded extension modules locked
                if not keep_so and so_file.suffix != ".pyd":
                    so_file.unlink()
        else:
            kernels = {
                pyname: KernelCpu(None, description, None, self)
                for pyname, description in kernel_descriptions.items()
            }

        for pyname, kernel in kernels.items():
            kernel.source = source
            kernel.specialized_source = specialized_source
            kernel.description.pyname = pyname
        return kernels

    def compile_kernels(
        self,
        module_name,
        kernel_descriptions,
        specialized_source,
        containing_dir=".",
        extra_compile_args=DEFAULT_COMPILE_ARGS,
        extra_link_args=DEFAULT_LINK_ARGS,
        keep=(),
    ) -> Path:
        """Compile ``specialized_source`` into a shared object, returning
        its path. cffi intermediates are deleted unless named in ``keep``."""
        if _forbid_compile:
            raise RuntimeError("Compilation is forbidden")

        ffi_interface = cffi.FFI()
        for pyname, kernel in kernel_descriptions.items():
            signature = kernel_signature(pyname, kernel)
            log.debug(f"cffi def {signature}")
            ffi_interface.cdef(signature)

        compile_args = list(_BASE_COMPILE_ARGS) + list(extra_compile_args)
        link_args = list(_BASE_COMPILE_ARGS) + list(extra_link_args)
        if self.openmp_enabled:
            for declaration in _OPENMP_DECLARATIONS:
                ffi_interface.cdef(declaration)
            compile_args.append("-fopenmp")
            link_args.append("-fopenmp")
        if os.name == "nt":
            # TODO: pass the MSVC equivalents of the gcc flags above
            compile_args, link_args = [], []

        ffi_interface.set_source(
            module_name,
            specialized_source,
            extra_compile_args=compile_args,
            extra_link_args=link_args,
            libraries=[] if os.name == "nt" else ["m"],
        )

        if self._compile_kernels_info:
            _print(f"Compiling {len(kernel_descriptions)} kernels for {self}")
        try:
            output_file = ffi_interface.compile(
                tmpdir=str(containing_dir),
                target=str(_so_path(module_name, containing_dir).absolute()),
                verbose=self._cffi_verbose,
            )
        finally:
            for ext in (".c", ".o"):
                if module_name + ext in keep:
                    continue
                intermediate = Path(containing_dir) / (module_name + ext)
                if intermediate.exists():
                    intermediate.unlink()
        return Path(output_file)

    def kernels_from_file(
        self,
        module_name: str,
        kernel_descriptions: Dict[str, Kernel],
        containing_dir=".",
    ) -> Dict[str, "KernelCpu"]:
        """
        Import the compiled module ``module_name`` from ``containing_dir``
        and wrap the kernels of ``kernel_descriptions`` found in it.
        """
        so_path = _so_path(module_name, containing_dir)
        spec = importlib.util.spec_from_file_location(module_name, so_path)
        module = importlib.util.module_from_spec(spec)
        spec.loader.exec_module(module)

        if self.openmp_enabled:
            self.omp_set_num_threads = module.lib.omp_set_num_threads
            self.omp_get_max_threads = module.lib.omp_get_max_threads

        return {
            pyname: KernelCpu(
                function=getattr(module.lib, description.c_name or pyname),
                description=description,
                ffi_interface=module.ffi,
                context=self,
            )
            for pyname, description in kernel_descriptions.items()
        }

    def zeros(self, *args, **kwargs):
        """``numpy.zeros``: kernels work in place on host arrays."""
        return np.zeros(*args, **kwargs)

    def __getstate__(self):
        state = self.__dict__.copy()
        # compiled modules do not pickle, kernels are rebuilt on demand
        state["_kernels"] = KernelDict()
        state.pop("omp_set_num_threads", None)
        state.pop("omp_get_max_threads", None)
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)


class KernelCpu:
    """A compiled kernel; calls check every array before it reaches C."""

    def __init__(self, function, description, ffi_interface, context):
        self.function = function
        self.description = description
        self.ffi_interface = ffi_interface
        self.context = context
        self.source = None
        self.specialized_source = None

    @property
    def name(self):
        return self.description.pyname

    def _array_arg(self, arg, value):
        where = f"argument `{arg.name}` of kernel {self.name}"
        if not isinstance(value, np.ndarray):
            raise ValueError(f"{where} must be a numpy array")
        if value.dtype != arg.atype._dtype:
            raise ValueError(
                f"{where} must have dtype {arg.atype._dtype}, "
                f"got {value.dtype}"
            )
        if not value.flags.c_contiguous:
            raise ValueError(f"{where} must be C-contiguous")
        if not arg.const and not value.flags.writeable:
            raise ValueError(f"output {where} is read-only")
        return self.ffi_interface.cast(
            arg.atype._c_type + "*", self.ffi_interface.from_buffer(value)
        )

    def __call__(self, **kwargs):
        if self.function is None:
            raise ValueError(f"Kernel {self.name} is not compiled")
        expected = self.description.arg_names
        if set(kwargs) != set(expected):
            raise ValueError(
                f"Kernel {self.name} takes {expected}, got {sorted(kwargs)}"
            )
        arg_list = [
            self._array_arg(arg, kwargs[arg.name])
            if arg.pointer
            else arg.atype(kwargs[arg.name])
            for arg in self.description.args
        ]

        if isinstance(self.context.omp_num_threads, int):
            if self.context.openmp_enabled:
                self.context.omp_set_num_threads(self.context.omp_num_threads)

        ret = self.function(*arg_list)
        if self.description.ret is not None:
            return ret


if _enabled:
    available.append(ContextCpu)
