# Copyright © 2024 age-lens contributors
# SPDX-License-Identifier: MIT

from .cli import main
main()
