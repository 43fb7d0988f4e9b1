import pychrono as chrono
import pychrono.irrlicht as chronoirr

# wheel demo
sys = chrono.ChSystemNSC()
sys.SetGravitationalAcceleration(chrono.ChVector3d(0, -9.81, 0))

ground = chrono.ChBodyEasyBox(10, 0.5, 10, 1000, True, True)
ground.SetPos(chrono.ChVector3d(0, -1, 0))
ground.SetFixed(True)
sys.Add(ground)

wheel = chrono.ChBodyEasyCylinder(chrono.ChAxis_Y, 0.4, 0.1, 800)
wheel.SetPos(chrono.ChVector3d(0, 4, 0))
wheel.SetMass(13)
sys.Add(wheel)

time_step = 0.001
t = 0.0
while t < 2.0:
    sys.DoStepDynamics(time_step)
    t += time_step
print("wheel final height", wheel.GetPos().y)
