"""
MCP-Motion-Control 配置模块
提供骨架定义、阈值常量和默认调度
"""

import os

from dotenv import load_dotenv
load_dotenv(override=True)

# ============================
# 骨架定义（22关节，Y轴向上，T-pose面朝+Z，左侧为+X，单位：米）
# ============================

JOINT_NAMES = [
    "pelvis", "left_hip", "right_hip", "spine1",
    "left_knee", "right_knee", "spine2",
    "left_ankle", "right_ankle", "spine3",
    "left_foot", "right_foot", "neck",
    "left_collar", "right_collar", "head",
    "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow",
    "left_wrist", "right_wrist",
]

JOINT_PARENTS = [-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19]

# 相对父关节的静止偏移
REST_OFFSETS = [
    (0.0, 0.0, 0.0),       # pelvis
    (0.06, -0.09, 0.0),    # left_hip
    (-0.06, -0.09, 0.0),   # right_hip
    (0.0, 0.11, 0.0),      # spine1
    (0.0, -0.38, 0.0),     # left_knee
    (0.0, -0.38, 0.0),     # right_knee
    (0.0, 0.14, 0.0),      # spine2
    (0.0, -0.42, 0.0),     # left_ankle
    (0.0, -0.42, 0.0),     # right_ankle
    (0.0, 0.05, 0.0),      # spine3
    (0.0, -0.04, 0.12),    # left_foot
    (0.0, -0.04, 0.12),    # right_foot
    (0.0, 0.21, 0.0),      # neck
    (0.08, 0.12, 0.0),     # left_collar
    (-0.08, 0.12, 0.0),    # right_collar
    (0.0, 0.09, 0.03),     # head
    (0.12, 0.03, 0.0),     # left_shoulder
    (-0.12, 0.03, 0.0),    # right_shoulder
    (0.26, 0.0, 0.0),      # left_elbow
    (-0.26, 0.0, 0.0),     # right_elbow
    (0.25, 0.0, 0.0),      # left_wrist
    (-0.25, 0.0, 0.0),     # right_wrist
]

# 静止姿态下骨盆离地高度（脚底 y = 0）
REST_PELVIS_HEIGHT = 0.93

# 躯干关节：骨盆、髋、脊柱链、颈、头、肩
TORSO_JOINTS = [
    "pelvis", "left_hip", "right_hip", "spine1", "spine2", "spine3",
    "neck", "head", "left_shoulder", "right_shoulder",
]

# 足部接触标签顺序
FOOT_CONTACT_JOINTS = ["left_ankle", "left_foot", "right_ankle", "right_foot"]

# 足部滑动指标使用的脚关节
FOOT_SKATE_JOINTS = ["left_foot", "right_foot"]

# ============================
# 运动表示与评估阈值
# ============================

DEFAULT_FPS = 20
FOOT_HEIGHT_THRESHOLD = 0.05       # 米
FOOT_SPEED_THRESHOLD = 0.025       # 米/帧
NORMALIZATION_EPS = 1e-8

SINGLE_AGENT_THRESHOLD = 0.5       # 单人控制（50 cm）
INTERACTION_THRESHOLD = 0.2        # 交互控制（20 cm）

# ============================
# 扩散与引导默认值
# ============================

DEFAULT_DIFFUSION_STEPS = 1000
COSINE_SCHEDULE_OFFSET = 0.008
MAX_BETA = 0.99999
TERMINAL_ALPHA_BAR_LIMIT = 1e-4
DEFAULT_GUIDANCE_SCALE = 2.5

# 每个去噪步的L-BFGS迭代次数：前期 / 最后 late_steps 步
GUIDANCE_ITERATIONS = {
    "on_mu": {"early": 5, "late": 10},
    "on_x0": {"early": 1, "late": 10},
}
GUIDANCE_LATE_STEPS = 10

DEFAULT_CLEARANCE = 0.4            # 米，躯干关节最小水平间距
LBFGS_MEMORY = 10
ARMIJO_C1 = 1e-4
ARMIJO_SHRINK = 0.5
ARMIJO_MAX_TRIALS = 20

# ============================
# 交互与规划器默认值
# ============================

DEFAULT_PLAN_FRAMES = 99
INITIAL_SEPARATION = 2.0           # 米，两人初始距离
PLAN_MIN_DURATION = 3
PLAN_MAX_DURATION = 10
PLAN_TRANSITION_GAP = 20
PLAN_MAX_AVOID_AFTER_CONTACT = 0.5

PLANNER_BACKGROUND = {
    "n_frames": DEFAULT_PLAN_FRAMES,
    "fps": DEFAULT_FPS,
    "height": 1.8,
    "arm_length": 0.6,
    "leg_length": 0.9,
    "separation": INITIAL_SEPARATION,
    "num_plans": 10,
}

PLANNER_MAX_ATTEMPTS = 3
PLANNER_BACKOFF_SECONDS = float(os.getenv("PLANNER_BACKOFF_SECONDS", "1.0"))
PLANNER_CACHE_NAMESPACE = "planner"
