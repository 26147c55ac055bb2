"""Design and mission simulation for a four-legged wheeled logistics robot.

Submodules:

* ``leg_model``: parallelogram leg kinematics and static torques
* ``leg_optimizer``: exhaustive link-length search
* ``drive_control``: stance IK and swerve steering
* ``perception``: synthetic detections and the box pose filter
* ``pickup_fsm`` / ``pickup_sim``: box pickup state machine and trial harness
* ``sim_world``: kinematic simulator, power model and CoT sweeps
* ``cli``: command-line runner
"""

__version__ = "0.1.0"
