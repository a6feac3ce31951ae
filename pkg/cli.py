#!/usr/bin/env python3
from packdit.__main__ import app

if __name__ == "__main__":
    app()
