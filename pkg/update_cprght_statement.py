# copyright ################################# #
# This file is part of the Xgam Package.      #
# Copyright (c) Xgam developers, 2024.        #
# ########################################### #

import os
import sys

copyright_statement = """copyright #################################
This file is part of the Xgam Package.     
Copyright (c) Xgam developers, 2024.       
###########################################"""

comment_chars = {".py": "#", ".h": "//"}

# only sources we own, never vendored or generated trees
roots = ["xgam", "tests", "docs", "setup.py", "update_cprght_statement.py"]


def header_lines(comment_char):
    return [
        f"{comment_char} {line} {comment_char}\n"
        for line in copyright_statement.splitlines()
    ] + ["\n"]


def strip_header(lines, comment_char):
    if not (
        len(lines) > 1
        and lines[0].startswith(comment_char + " copyright ##")
    ):
        return lines
    for ill, ll in enumerate(lines):
        if not ll.startswith(comment_char):
            raise ValueError("unterminated copyright block")
        if ll.startswith(comment_char + " ########"):
            break
    rest = lines[ill + 1 :]
    return rest[1:] if rest and rest[0] == "\n" else rest


def update_file(path):
    comment_char = comment_chars[os.path.splitext(path)[1]]
    with open(path, "r") as fid:
        lines = fid.readlines()
    lines = header_lines(comment_char) + strip_header(lines, comment_char)
    with open(path, "w") as fid:
        fid.writelines(lines)


def iter_sources(root):
    if os.path.isfile(root):
        yield root
        return
    for dirpath, _, files in os.walk(root):
        for fname in sorted(files):
            if os.path.splitext(fname)[1] in comment_chars:
                yield os.path.join(dirpath, fname)


if __name__ == "__main__":
    for root in sys.argv[1:] or roots:
        for path in iter_sources(root):
            print(path)
            update_file(path)
