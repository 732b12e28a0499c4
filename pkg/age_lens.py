#!/usr/bin/env python3

# Copyright © 2024 age-lens contributors
# SPDX-License-Identifier: MIT

from agelens.cli import main

if __name__ == '__main__':
    main()
