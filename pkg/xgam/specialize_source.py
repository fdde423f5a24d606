# copyright ################################# #
# This file is part of the Xgam Package.      #
# Copyright (c) Xgam developers, 2024.        #
# ########################################### #

import os

_TARGETS = ("cpu_serial", "cpu_openmp")


def _open_vectorized_loop(varname, limname, specialize_for):
    lines = []
    if specialize_for == "cpu_openmp":
        lines.append("#pragma omp parallel for //autovectorized")
    lines.append(
        f"for (int64_t {varname}=0; {varname}<{limname}; {varname}++)"
        + "{ //autovectorized"
    )
    return lines


def specialize_source(source, specialize_for):
    """Expand the kernel annotations of ``source`` for a CPU target.

    ``//vectorize_over i n`` replaces its whole line with a loop over
    ``i in [0, n)``, closed by ``//end_vectorize``; with ``cpu_openmp`` the
    loop is distributed over threads, so its iterations must be independent.
    Lines marked ``//only_for_context <targets>`` are commented out for
    other targets.
    """
    if specialize_for not in _TARGETS:
        raise ValueError(f"Unknown specialization target `{specialize_for}`")

    new_lines = []
    inside_vect_block = False
    for ii, ll in enumerate(source.splitlines()):
        if "//vectorize_over" in ll:
            if inside_vect_block:
                raise ValueError(f"Line {ii}: Previous vect block not closed!")
            inside_vect_block = True
            varname, limname = ll.split("//vectorize_over")[-1].split()
            new_lines.extend(
                _open_vectorized_loop(varname, limname, specialize_for)
            )
        elif "//end_vectorize" in ll:
            if not inside_vect_block:
                raise ValueError(f"Line {ii}: No vect block to close!")
            new_lines.append("}//end autovectorized")
            inside_vect_block = False
        else:
            if "//only_for_context" in ll:
                temp_contexts = ll.split("//only_for_context")[-1].split()
                if specialize_for not in temp_contexts:
                    ll = "//" + ll
            new_lines.append(ll)

    if inside_vect_block:
        raise ValueError("Vect block not closed at end of source!")

    newfilecontent = "\n".join(new_lines)
    newfilecontent = newfilecontent.replace("/*gpukern*/", " ")
    newfilecontent = newfilecontent.replace("/*gpufun*/", " static inline")
    newfilecontent = newfilecontent.replace("/*gpuglmem*/", " ")

    if os.name == "nt":  # windows
        restrict_qualifier = " "
    else:  # other os
        restrict_qualifier = " restrict "
    newfilecontent = newfilecontent.replace("/*restrict*/", restrict_qualifier)

    return newfilecontent
