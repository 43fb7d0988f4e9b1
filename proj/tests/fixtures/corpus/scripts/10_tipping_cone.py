import pychrono as chrono
import pychrono.irrlicht as chronoirr

# tipping cone demo
sys = chrono.ChSystemNSC()
sys.SetGravitationalAcceleration(chrono.ChVector3d(0, -9.81, 0))

ground = chrono.ChBodyEasyBox(10, 0.5, 10, 1000, True, True)
ground.SetPos(chrono.ChVector3d(0, -1, 0))
ground.SetFixed(True)
sys.Add(ground)

cone = chrono.ChBodyEasyCone(chrono.ChAxis_Y, 0.3, 0.6, 1000)
cone.SetPos(chrono.ChVector3d(0, 11, 0))
cone.SetMass(20)
sys.Add(cone)

time_step = 0.008
t = 0.0
while t < 2.0:
    sys.DoStepDynamics(time_step)
    t += time_step
print("tipping_cone final height", cone.GetPos().y)
