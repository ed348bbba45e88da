"""estor 测试包。"""
