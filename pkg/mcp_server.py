#!/usr/bin/env python3
"""
MCP运动控制 - 统一服务器入口点
支持stdio和HTTP两种传输模式，根据命令行参数自动选择
"""

import argparse
import sys
from pathlib import Path

HELP_TEXT = """
MCP运动控制服务器

用途:
    接触计划校验、LLM规划器调用与生成运动评估

传输模式:
    --stdio     使用标准输入输出传输 (推荐本地集成)
    --http      使用HTTP传输 (适用于远程调用)

使用示例:
    python mcp_server.py --stdio
    python mcp_server.py --http --port 3002

环境变量配置:
    PLANNER_API_KEY             规划器端点API密钥 (在线规划必需)
    PLANNER_BASE_URL            规划器端点地址
    PLANNER_MODEL               规划器模型名称
    CACHE_ROOT_DIR              补全缓存目录
    LOG_LEVEL                   日志级别

工具:
    • validate_contact_plan     校验接触计划
    • fetch_contact_plans       生成接触计划
    • evaluate_motions          评估生成运动
"""


def parse_arguments(argv=None):
    """解析命令行参数"""
    parser = argparse.ArgumentParser(
        description="MCP运动控制服务器",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        add_help=False,
    )
    transport_group = parser.add_mutually_exclusive_group(required=False)
    transport_group.add_argument("--stdio", action="store_true", help="使用stdio传输模式 (推荐本地集成)")
    transport_group.add_argument("--http", action="store_true", help="使用HTTP传输模式 (适用于远程调用)")
    parser.add_argument("--host", default="0.0.0.0", help="HTTP服务器监听地址 (默认: 0.0.0.0)")
    parser.add_argument("--port", type=int, default=3001, help="HTTP服务器端口 (默认: 3001)")
    parser.add_argument("-h", "--help", action="store_true", help="显示帮助信息")

    args = parser.parse_args(argv)
    if args.help:
        print(HELP_TEXT, file=sys.stderr)
        sys.exit(0)
    if not args.stdio and not args.http:
        print("未指定传输模式，默认使用stdio模式", file=sys.stderr)
        args.stdio = True
    return args


def main():
    """主入口函数"""
    try:
        args = parse_arguments()
        # stdio模式下stdout用于MCP通信，提示信息只写stderr
        sys.path.insert(0, str(Path(__file__).parent / "src"))
        from mcp_server import SERVER_CONFIG, run_server

        if args.stdio:
            print("启动MCP运动控制服务器 - stdio模式", file=sys.stderr)
            run_server("stdio")
        else:
            SERVER_CONFIG["host"] = args.host
            SERVER_CONFIG["port"] = args.port
            print(f"启动MCP运动控制服务器 - HTTP模式: http://{args.host}:{args.port}/mcp", file=sys.stderr)
            run_server("streamable-http")
    except KeyboardInterrupt:
        print("\n服务器已停止", file=sys.stderr)
        sys.exit(0)
    except Exception as e:
        print(f"启动服务器失败: {e}", file=sys.stderr)
        sys.exit(1)


if __name__ == "__main__":
    main()
