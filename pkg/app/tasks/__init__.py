# This file makes the 'tasks' directory a Python package.
