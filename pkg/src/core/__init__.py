"""Domain logic: geometry, kinematics, dynamics, QP and constraint rows."""
