# conftest.py

import os
import sys

# 仓库根目录加入 sys.path，测试里可以直接 import backend / storage / utils / main
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
