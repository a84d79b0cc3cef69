"""
Age Ensemble - 表观年龄估计流水线
平移分组编码、top-k 期望值解码、三模型融合与 ε-error 评估
"""
__version__ = "1.0.0"
